"""Re-derivation of the core identities behind a result bundle.

Each check recomputes one identity with sympy from the bundle's own data
(the producing engine is never imported):

- euler:        E_u(Q*G) == 0 for every reported multiplier
- conservation: D_t T + sum_i D_i Phi^i - Q*G == 0 for every current
- integral:     D_zeta(psi) - lambda * G_bar == 0 for every first integral
- chain:        the reduced equation G_bar agrees (up to a constant
                factor) with G recomputed through the change of variables
"""

from __future__ import annotations

from dataclasses import dataclass

import sympy as sp

from .translate import Context, TranslateError, read


@dataclass
class Report:
    name: str
    ok: bool
    detail: str = ""

    def row(self):
        return {"name": self.name, "ok": self.ok, "detail": self.detail}


def _collapse_powers(e):
    """Normalize exp-power nests such as sqrt(exp(2*rho)), split powers of
    products, and resolve derivative-at-point nodes whose point then
    simplifies."""
    e = e.replace(
        lambda ex: isinstance(ex, sp.Subs),
        lambda ex: sp.Subs(
            ex.expr, ex.variables,
            tuple(sp.simplify(sp.powsimp(sp.powdenest(pt, force=True),
                                         force=True))
                  for pt in ex.point)).doit())
    e = sp.expand_power_base(e, force=True)
    return sp.powsimp(sp.powdenest(e, force=True), force=True)


def _simplify_zero(e, subs=None) -> bool:
    if subs:
        e = e.subs(subs, simultaneous=True)
    e = sp.powsimp(sp.expand(e), force=True)
    if e == 0:
        return True
    e = sp.simplify(e)
    if e == 0:
        return True
    e = sp.radsimp(sp.powsimp(sp.cancel(sp.together(e)), force=True))
    return sp.simplify(e) == 0


def _euler_operator(F, u, ivars):
    """Variational derivative, written directly from its definition."""
    out = sp.S.Zero
    seen = set()
    for d in sp.preorder_traversal(F):
        if d == u or (isinstance(d, sp.Derivative) and d.expr == u):
            if d in seen:
                continue
            seen.add(d)
            partial = sp.diff(F, d)
            if isinstance(d, sp.Derivative):
                term = partial
                sign = 1
                for var, count in d.variable_count:
                    term = sp.diff(term, var, count)
                    sign *= (-1) ** count
                out += sign * term
            else:
                out += partial
    return out


def _branch_ctx(bundle: dict, branch: dict) -> Context:
    ivars = bundle["independent"]
    deps = {d: tuple(ivars) for d in bundle["dependent"]}
    params = list(branch.get("parameters", bundle["parameters"]))
    params += list(branch.get("derived", {}))
    params += list(bundle.get("derived", {}))
    return Context(ivars, deps, sorted(set(params)))


def _derived_subs(ctx: Context, branch: dict, bundle: dict):
    subs = {}
    merged = dict(bundle.get("derived", {}))
    merged.update(branch.get("derived", {}))
    for name, text in merged.items():
        subs[ctx.params[name]] = read(ctx, text)
    return subs


def _solved_subs(ctx: Context, pde: dict):
    return {read(ctx, lead): read(ctx, rhs) for lead, rhs in pde.items()}


def check_euler(bundle: dict) -> list:
    out = []
    for bi, branch in enumerate(bundle["branches"]):
        ctx = _branch_ctx(bundle, branch)
        subs = _derived_subs(ctx, branch, bundle)
        G = sp.S.Zero
        for lead, rhs in branch["pde"].items():
            G = read(ctx, lead) - read(ctx, rhs)
        u = ctx.deps[bundle["dependent"][0]]
        for Q_text in branch["multipliers"]:
            try:
                Q = read(ctx, Q_text)
                resid = _euler_operator(sp.expand(Q * G), u,
                                        list(ctx.ivars.values()))
                ok = _simplify_zero(resid, subs)
                detail = "" if ok else f"residual {sp.simplify(resid)}"
            except TranslateError as err:
                ok, detail = False, str(err)
            out.append(Report(f"euler[{bi}] Q={Q_text[:40]}", ok, detail))
    return out


def _reduced_ctx(bundle: dict, branch: dict) -> Context:
    ivars = branch.get("reduced_ivars", bundle["independent"])
    ivars = list(ivars) + ["zeta", "rho", "chi"]
    deps = {d: tuple(branch.get("reduced_ivars", bundle["independent"]))
            for d in bundle["dependent"]}
    deps[branch["reduced_dep"]] = ("zeta",)
    params = list(branch.get("parameters", bundle["parameters"]))
    params += list(branch.get("derived", {}))
    return Context(ivars, deps, sorted(set(params)))


def check_conservation(bundle: dict) -> list:
    out = []
    for bi, branch in enumerate(bundle["branches"]):
        if "reduced_ode" not in branch:
            continue
        ctx = _reduced_ctx(bundle, branch)
        rivars = branch.get("reduced_ivars", bundle["independent"])
        G = sp.S.Zero
        for lead, rhs in branch.get("reduced_pde", branch["pde"]).items():
            G = read(ctx, lead) - read(ctx, rhs)
        subs = _derived_subs(ctx, branch, bundle)
        for ii, rec in enumerate(branch.get("integrals", [])):
            try:
                Q = read(ctx, rec["reduced_multiplier"])
                div = sp.S.Zero
                for v in rivars:
                    div += sp.diff(read(ctx, rec["current"][v]),
                                   ctx.ivars[v])
                resid = div - Q * G
                ok = _simplify_zero(resid, subs)
                detail = "" if ok else "divergence identity fails"
            except TranslateError as err:
                ok, detail = False, str(err)
            out.append(Report(f"conservation[{bi}.{ii}]", ok, detail))
    return out


def check_first_integral(bundle: dict) -> list:
    out = []
    for bi, branch in enumerate(bundle["branches"]):
        if "reduced_ode" not in branch:
            continue
        ctx = _reduced_ctx(bundle, branch)
        subs = _derived_subs(ctx, branch, bundle)
        zeta = ctx.ivars["zeta"]
        Gbar = read(ctx, branch["reduced_ode"])
        for ii, rec in enumerate(branch.get("integrals", [])):
            try:
                psi = read(ctx, rec["psi"])
                lam = read(ctx, rec["lambda"])
                resid = sp.diff(psi, zeta) - lam * Gbar
                ok = _simplify_zero(resid, subs)
                detail = "" if ok else "D_zeta psi != lambda * G_bar"
            except TranslateError as err:
                ok, detail = False, str(err)
            out.append(Report(f"integral[{bi}.{ii}]", ok, detail))
    return out


def check_chain_rule(bundle: dict) -> list:
    """Recompute the reduced equation through the change of variables and
    compare with the bundle's G_bar up to a constant factor."""
    out = []
    for bi, branch in enumerate(bundle["branches"]):
        if "reduced_ode" not in branch or "map" not in branch:
            continue
        try:
            ok, detail = _chain_one(bundle, branch)
        except (TranslateError, KeyError) as err:
            ok, detail = False, str(err)
        out.append(Report(f"chain[{bi}]", ok, detail))
    return out


def _chain_one(bundle: dict, branch: dict):
    rivars = branch.get("reduced_ivars", bundle["independent"])
    dep = bundle["dependent"][0]
    new_dep = branch["reduced_dep"]
    params = list(branch.get("parameters", bundle["parameters"]))
    params += list(branch.get("derived", {}))
    mp = branch["map"]
    new_names = list(mp["forward"])
    ctx = Context(list(rivars) + new_names,
                  {dep: tuple(rivars), new_dep: ("zeta",)},
                  sorted(set(params)))
    subs_derived = _derived_subs(ctx, branch, bundle)
    zeta_sym = ctx.ivars["zeta"]
    # dependent as a composite function of the old variables
    zeta_def = read(ctx, mp["forward"]["zeta"])
    u_of_old = read(ctx, mp["dep_subst"]).subs(zeta_sym, zeta_def)
    G = sp.S.Zero
    for lead, rhs in branch.get("reduced_pde", branch["pde"]).items():
        G = read(ctx, lead) - read(ctx, rhs)
    u_fun = sp.Function(dep)(*[ctx.ivars[v] for v in rivars])
    repl = {}
    for d in sp.preorder_traversal(G):
        if isinstance(d, sp.Derivative) and d.expr.func.__name__ == dep:
            expr = u_of_old
            for var, count in d.variable_count:
                expr = sp.diff(expr, var, count)
            repl[d] = expr
    for d in sp.preorder_traversal(G):
        if d.func.__name__ == dep and not isinstance(d, sp.Derivative):
            repl[d] = u_of_old
    Gsub = G.xreplace(repl)
    # substitute the inverse to land in the new variables
    inv = {ctx.ivars[v]: read(ctx, t) for v, t in mp["inverse"].items()}
    Gsub = Gsub.subs(inv, simultaneous=True)
    Gsub = _collapse_powers(Gsub)
    weight = read(ctx, branch["weight"])
    Gbar = read(ctx, branch["reduced_ode"])
    ratio = sp.cancel(Gsub / (weight * Gbar))
    ratio = sp.expand_power_base(sp.expand(ratio), force=True)
    ratio = sp.powsimp(ratio, force=True)
    if subs_derived:
        ratio = ratio.subs(subs_derived, simultaneous=True)
        ratio = _collapse_powers(ratio)
    ratio = sp.powsimp(sp.powdenest(
        sp.expand_power_base(ratio, force=True), force=True), force=True)
    ratio = ratio.replace(lambda ex: ex.func == sp.exp,
                          lambda ex: sp.exp(sp.ratsimp(ex.args[0])))
    ratio = sp.simplify(sp.cancel(sp.together(ratio)))
    if ratio.free_symbols & {zeta_sym, ctx.ivars.get("rho"),
                             ctx.ivars.get("chi")} - {None}:
        return False, f"reduced equation ratio not constant: {ratio}"
    if ratio == 0:
        return False, "reduced equation vanishes"
    return True, ""


ALL_CHECKS = {
    "euler": check_euler,
    "conservation": check_conservation,
    "integral": check_first_integral,
    "chain": check_chain_rule,
}


def run_all(bundle: dict) -> list:
    out = []
    for name in ("euler", "conservation", "integral", "chain"):
        out.extend(ALL_CHECKS[name](bundle))
    return out
