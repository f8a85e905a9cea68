"""Symmetry reduction of conservation laws to first integrals.

Builds verified changes of variables to canonical coordinates (invariant
first, then one canonical coordinate per generator), transforms conserved
currents by the contravariant-density rule, reduces the PDE to an ODE in
the invariants, and extracts first integrals along two independent routes:
from the transformed current, and from the reduced multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .diffops import (
    ConservedCurrent, PdeSystem, PointSymmetry, commutator, euler_residues,
    invert_divergence, make_symmetry, prolong, replace_dependent, subs_var,
    total_derivative,
)
from .expr import (
    Coef, COEF_ONE, E_ONE, E_ZERO, ExpLin, Expr, ExprError,
    POLY_ONE, Poly, as_expr, coef_to_explin, eliminate_derived, exp,
    is_zero_mod, jet_key, ln,
)


class BadParameters(ExprError):
    pass


class NotInvariant(ExprError):
    pass


class SingularMap(ExprError):
    pass


class ResidualCanonicalDependence(ExprError):
    pass


class NotTotalDerivative(ExprError):
    pass


@dataclass(frozen=True)
class ReductionMap:
    """Change of variables (old ivars, u) -> (zeta, rho[, chi], U)."""
    old_ivars: tuple            # ordered, e.g. ("t", "x")
    new_ivars: tuple            # (zeta, rho[, chi])
    old_dep: str
    new_dep: str
    forward: tuple              # tuple[(new name, Expr in old vars)]
    inverse: tuple              # tuple[(old name, Expr in new vars)]
    dep_subst: Expr             # u as Expr in old vars and new-dep jets
    kind: str = "user"

    def forward_map(self) -> dict:
        return dict(self.forward)

    def inverse_map(self) -> dict:
        return dict(self.inverse)

    @property
    def zeta(self) -> str:
        return self.new_ivars[0]

    @property
    def canonical(self) -> tuple:
        return self.new_ivars[1:]

    def apply(self, e: Expr) -> Expr:
        """Express a jet expression on invariant solutions in new
        variables."""
        zeta = self.zeta
        out = replace_dependent(
            e, self.old_dep, self.dep_subst,
            defs={zeta: self.forward_map()[zeta]},
            spaces={self.new_dep: (zeta,)})
        for old, val in self.inverse:
            out = subs_var(out, old, val)
        return out

    def jacobian(self) -> Expr:
        """det d(new)/d(old) expressed in the new variables."""
        n = len(self.old_ivars)
        fw = [dict(self.forward)[v] for v in self.new_ivars]
        rows = [[total_derivative(f, v) for v in self.old_ivars] for f in fw]
        det = _det(rows, n)
        if det.is_zero:
            raise SingularMap("Jacobian determinant vanishes identically")
        out = det
        for old, val in self.inverse:
            out = subs_var(out, old, val)
        return out


def _det(rows, n: int) -> Expr:
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    out = E_ZERO
    for j in range(n):
        minor = [[rows[i][k] for k in range(n) if k != j]
                 for i in range(1, n)]
        term = rows[0][j] * _det(minor, n - 1)
        out = out + term if j % 2 == 0 else out - term
    return out


@dataclass(frozen=True)
class ReducedODE:
    expr: Expr                  # in (zeta, U-jets)
    zeta: str
    dep: str
    weight: Expr                # G|map = weight * expr
    order: int

    def leading(self) -> tuple:
        jets = sorted(self.expr.jets(self.dep),
                      key=lambda b: sum(n for _v, n in b[2]))
        if not jets:
            raise ExprError("reduced equation has no jets")
        return jets[-1][2]


@dataclass(frozen=True)
class FirstIntegral:
    psi: Expr
    constant_name: str
    multiplier: Expr
    route: str                  # "current" | "multiplier"


# ---------------------------------------------------------------------------
# builtin maps
# ---------------------------------------------------------------------------

def _names(problem_params, wanted=("zeta", "rho", "chi")):
    for w in wanted:
        if w in problem_params:
            raise BadParameters(
                f"reserved coordinate name {w!r} is already declared")
    return wanted


def _check_conditions(maps: ReductionMap, algebra, derived) -> None:
    """Assert the canonical conditions: X_i zeta = 0; X_1 rho = 1;
    in 2+1: X_2 chi = 1, X_1 chi = 0, X_2 rho = C rho."""
    fw = maps.forward_map()
    zeta = fw[maps.zeta]
    for X in algebra:
        r = prolong(X, zeta)
        if not is_zero_mod(r, derived):
            raise BadParameters(
                f"{X.name} does not annihilate the invariant: {r}")
    names = maps.canonical
    X1 = algebra[0]
    r = prolong(X1, fw[names[0]]) - E_ONE
    if not is_zero_mod(r, derived):
        raise BadParameters(f"X1 rho != 1: residual {r}")
    if len(names) == 2:
        X2 = algebra[1]
        r = prolong(X2, fw[names[1]]) - E_ONE
        if not is_zero_mod(r, derived):
            raise BadParameters(f"X2 chi != 1: residual {r}")
        r = prolong(X1, fw[names[1]])
        if not is_zero_mod(r, derived):
            raise BadParameters(f"X1 chi != 0: residual {r}")
    # roundtrip: forward(inverse) is the identity on the new variables
    for new, f in maps.forward:
        e = f
        for old, val in maps.inverse:
            e = subs_var(e, old, val)
        if not is_zero_mod(e - Expr.var(new), derived):
            raise BadParameters(
                f"inverse substitution fails roundtrip for {new}: {e}")


def translation_map(ivars: tuple, dep: str, c: Expr,
                    derived=None) -> ReductionMap:
    """Travelling-wave reduction for X = d/dt + c d/dx."""
    t, x = ivars
    c = as_expr(c)
    if c.is_zero:
        raise BadParameters("zero wave speed")
    zeta, rho, _ = _names(c.params())
    newdep = dep.upper() if dep.upper() != dep else dep + "c"
    zdef = Expr.var(x) - c * Expr.var(t)
    rdef = Expr.var(x) / c
    inverse = (
        (t, Expr.var(rho) - Expr.var(zeta) / c),
        (x, c * Expr.var(rho)),
    )
    m = ReductionMap(
        old_ivars=ivars, new_ivars=(zeta, rho), old_dep=dep, new_dep=newdep,
        forward=((zeta, zdef), (rho, rdef)), inverse=inverse,
        dep_subst=Expr.jet(newdep), kind="translation-1d")
    return m


def scaling_map(ivars: tuple, dep: str, X: PointSymmetry,
                derived=None) -> ReductionMap:
    """Similarity reduction for a scaling aligned with the first variable:
    X = lam*(t d/dt + beta x d/dx + alpha u d/du)."""
    from .expr import explin_to_expr
    t, x = ivars
    xi = X.xi_map()
    eta = X.eta_map()
    lam_e = xi.get(t, E_ZERO) / Expr.var(t)
    beta_e = xi.get(x, E_ZERO) / Expr.var(x) / lam_e
    alpha_e = eta.get(dep, E_ZERO) / Expr.jet(dep) / lam_e
    try:
        lam = coef_to_explin(lam_e.const_coef())
        beta = coef_to_explin(beta_e.const_coef())
        alpha = coef_to_explin(alpha_e.const_coef())
    except ExprError as err:
        raise BadParameters(f"not a diagonal scaling: {err}") from None
    zeta, rho, _ = _names(set())
    newdep = dep.upper() if dep.upper() != dep else dep + "c"
    tvar, xvar = Expr.var(t), Expr.var(x)
    zdef = xvar * tvar.pow(beta.scale(-1))
    rdef = ln(tvar) / explin_to_expr(lam)
    tinv = exp(explin_to_expr(lam) * Expr.var(rho))
    xinv = Expr.var(zeta) * tinv.pow(beta)
    dep_subst = tvar.pow(alpha) * Expr.jet(newdep)
    return ReductionMap(
        old_ivars=ivars, new_ivars=(zeta, rho), old_dep=dep, new_dep=newdep,
        forward=((zeta, zdef), (rho, rdef)),
        inverse=((t, tinv), (x, xinv)),
        dep_subst=dep_subst, kind="scaling-1d")


def two_translations_map(ivars: tuple, dep: str, zeta_def: Expr,
                         algebra, derived=None) -> ReductionMap:
    """Line travelling waves: two commuting translations; the invariant is
    supplied, canonical coordinates are solved linearly."""
    X1, X2 = algebra[0], algebra[1]
    zeta, rho, chi = _names(set())
    a1 = {v: _const_coef_of(X1, v) for v in ivars}
    a2 = {v: _const_coef_of(X2, v) for v in ivars}
    rho_def = _solve_linear_coordinate(ivars, [(a1, 1), (a2, 0)])
    chi_def = _solve_linear_coordinate(ivars, [(a1, 0), (a2, 1)])
    forward = ((zeta, zeta_def), (rho, rho_def), (chi, chi_def))
    inverse = _invert_linear(ivars, forward, (zeta, rho, chi))
    newdep = dep.upper() if dep.upper() != dep else dep + "c"
    return ReductionMap(
        old_ivars=ivars, new_ivars=(zeta, rho, chi), old_dep=dep,
        new_dep=newdep, forward=forward, inverse=inverse,
        dep_subst=Expr.jet(newdep), kind="two-translations-2d")


def _const_coef_of(X: PointSymmetry, v: str) -> Coef:
    e = X.xi_map().get(v, E_ZERO)
    if e.is_zero:
        return Coef(Poly({}))
    return e.const_coef()


def _solve_linear_coordinate(ivars: tuple, conditions) -> Expr:
    """Find sum(r_v * v) with sum(r_v * a_v) = rhs for each (a, rhs);
    free components are set to zero in variable order."""
    import itertools
    n = len(ivars)
    for support in itertools.chain.from_iterable(
            itertools.combinations(range(n), k)
            for k in range(1, n + 1)):
        coefs = _try_support(ivars, conditions, support)
        if coefs is not None:
            out = E_ZERO
            for i, v in enumerate(ivars):
                if not coefs[i].is_zero:
                    out = out + Expr.from_coef(coefs[i]) * Expr.var(v)
            return out
    raise BadParameters("no linear canonical coordinate exists")


def _try_support(ivars, conditions, support):
    m = len(conditions)
    k = len(support)
    if k != m:
        return None
    rows = []
    rhs = []
    for a, r in conditions:
        rows.append([a[ivars[j]] for j in support])
        rhs.append(Coef.const(r))
    sol = _solve_square(rows, rhs)
    if sol is None:
        return None
    out = [Coef(Poly({}))] * len(ivars)
    for idx, j in enumerate(support):
        out[j] = sol[idx]
    return out


def _solve_square(rows, rhs):
    n = len(rows)
    work = [row[:] + [rhs[i]] for i, row in enumerate(rows)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if not work[r][col].is_zero:
                piv = r
                break
        if piv is None:
            return None
        work[col], work[piv] = work[piv], work[col]
        pval = work[col][col]
        for r in range(n):
            if r == col:
                continue
            f = work[r][col] / pval
            if f.is_zero:
                continue
            work[r] = [work[r][k] - f * work[col][k] for k in range(n + 1)]
    return [work[i][n] / work[i][i] for i in range(n)]


def _invert_linear(ivars: tuple, forward, new_names) -> tuple:
    """Invert new = M old for affine/linear forward maps."""
    n = len(ivars)
    rows = []
    rhs = []
    for name, f in forward:
        row = []
        rest = f
        for v in ivars:
            c = total_derivative(f, v)
            if not c.is_constant:
                raise BadParameters(f"coordinate {name} is not linear")
            row.append(c.const_coef())
            rest = rest - c * Expr.var(v)
        if not rest.is_zero:
            raise BadParameters(f"coordinate {name} is not homogeneous")
        rows.append(row)
        rhs.append(Expr.var(name))
    # solve M old = new for old symbolically: old = M^{-1} new
    out = []
    for j, v in enumerate(ivars):
        out.append((v, _cramer(rows, rhs, j)))
    return tuple(out)


def _cramer(rows, rhs_exprs, j: int) -> Expr:
    n = len(rows)
    det = _coef_det(rows)
    if det.is_zero:
        raise SingularMap("linear coordinate change is singular")
    total = E_ZERO
    for i in range(n):
        minor = [[rows[r][c] for c in range(n) if c != j]
                 for r in range(n) if r != i]
        cof = _coef_det(minor) if n > 1 else COEF_ONE
        sign = 1 if (i + j) % 2 == 0 else -1
        total = total + Expr.from_coef(cof) * rhs_exprs[i] * sign
    return total / Expr.from_coef(det)


def _coef_det(rows) -> Coef:
    n = len(rows)
    if n == 0:
        return COEF_ONE
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    out = Coef(Poly({}))
    for j in range(n):
        minor = [[rows[i][k] for k in range(n) if k != j]
                 for i in range(1, n)]
        t = rows[0][j] * _coef_det(minor)
        out = out + t if j % 2 == 0 else out - t
    return out


def translation_scaling_map(ivars: tuple, dep: str, zeta_def: Expr,
                            dep_subst_template, algebra,
                            derived=None) -> ReductionMap:
    """Solvable pair [X1, X2] = C X1: X1 a translation, X2 a scaling.
    rho is a linear coordinate with X1 rho = 1, X2 rho = C rho;
    chi = ln(w)/gamma for a variable w with X1 w = 0, X2 w = gamma w."""
    X1, X2 = algebra[0], algebra[1]
    zeta, rho, chi = _names(set())
    # structure constant
    com = commutator(X1, X2, ivars, (dep,))
    C = _proportionality(com, X1, ivars, dep)
    # chi variable
    chi_def = None
    w_name = None
    gamma = None
    for w in ivars:
        if not X1.xi_map().get(w, E_ZERO).is_zero:
            continue
        sc = X2.xi_map().get(w, E_ZERO)
        if sc.is_zero:
            continue
        ratio = sc / Expr.var(w)
        if ratio.is_constant:
            gamma = ratio.const_coef()
            w_name = w
            chi_def = ln(Expr.var(w)) / Expr.from_coef(gamma)
            break
    if chi_def is None:
        raise BadParameters("no exponential canonical coordinate found")
    # rho: linear combination of coordinates of scaling weight C
    a1 = {}
    ok_vars = []
    for v in ivars:
        if v == w_name:
            continue
        sc = X2.xi_map().get(v, E_ZERO)
        weight = sc / Expr.var(v) if not sc.is_zero else E_ZERO
        if weight.is_constant and is_zero_mod(
                weight - Expr.from_coef(C), derived):
            ok_vars.append(v)
    conds = []
    a1 = {v: _const_coef_of(X1, v) for v in ok_vars}
    rho_def = None
    for v in ok_vars:
        if not a1[v].is_zero:
            rho_def = Expr.var(v) / Expr.from_coef(a1[v])
            break
    if rho_def is None:
        raise BadParameters("no canonical coordinate with X1 rho = 1")
    forward = ((zeta, zeta_def), (rho, rho_def), (chi, chi_def))
    inverse = _invert_translation_scaling(
        ivars, forward, (zeta, rho, chi), w_name, gamma, derived)
    newdep = dep.upper() if dep.upper() != dep else dep + "c"
    return ReductionMap(
        old_ivars=ivars, new_ivars=(zeta, rho, chi), old_dep=dep,
        new_dep=newdep, forward=forward, inverse=inverse,
        dep_subst=dep_subst_template, kind="translation-scaling-2d")


def _proportionality(com: PointSymmetry, X1: PointSymmetry, ivars, dep):
    """com = C * X1 for a constant C."""
    C = None
    for v in ivars:
        a = com.xi_map().get(v, E_ZERO)
        b = X1.xi_map().get(v, E_ZERO)
        if b.is_zero:
            if not a.is_zero:
                raise BadParameters("algebra is not solvable of rank one")
            continue
        ratio = a / b
        if not ratio.is_constant:
            raise BadParameters("structure constant is not constant")
        if C is None:
            C = ratio
        elif not (C - ratio).is_zero:
            raise BadParameters("commutator is not proportional to X1")
    if C is None:
        C = E_ZERO
    return C.const_coef() if not C.is_zero else Coef(Poly({}))


def _invert_translation_scaling(ivars, forward, new_names, w_name, gamma,
                                derived):
    """Invert zeta = L(vars)/w^beta-style maps: w = exp(gamma chi), the
    rho-variable is linear, and the zeta definition is solved for the
    remaining variable."""
    zeta, rho, chi = new_names
    fw = dict(forward)
    out = {w_name: exp(Expr.from_coef(gamma) * Expr.var(chi))}
    # rho is var/const: var = const * rho
    rho_def = fw[rho]
    rho_var = sorted(rho_def.variables())[0]
    coef = rho_def / Expr.var(rho_var)
    out[rho_var] = Expr.var(rho) / Expr.from_coef(coef.const_coef())
    remaining = [v for v in ivars if v not in out]
    if len(remaining) != 1:
        raise BadParameters("cannot invert the reduction map")
    v = remaining[0]
    # substitute the known inverses into zeta's definition, solve linearly
    zdef = fw[zeta]
    for name, val in out.items():
        zdef = subs_var(zdef, name, val)
    a = total_derivative(zdef, v)
    if a.depends_on(v):
        raise BadParameters(f"invariant is not linear in {v}")
    rest = zdef - a * Expr.var(v)
    sol = (Expr.var(zeta) - rest) / a
    out[v] = sol
    return tuple((vv, out[vv]) for vv in ivars)


def rename_dependent(e: Expr, old: str, new: str) -> Expr:
    """Mechanically rename a dependent in every jet key."""
    out = {}
    for m, c in e.terms:
        items = []
        for b, ee in m:
            if b[0] == "j" and b[1] == old:
                items.append(((("j", new, b[2])), ee))
            elif b[0] in ("p", "e", "l"):
                tag = b[0]
                items.append(((tag, rename_dependent(b[1], old, new)), ee))
            else:
                items.append((b, ee))
        from .expr import _mono_sorted
        key = _mono_sorted(items)
        out[key] = out[key] + c if key in out else c
    return Expr(out)


def radialize(sys: PdeSystem, spatial: tuple, radial: str = "r") -> PdeSystem:
    """Restrict a rotationally invariant scalar PDE to radial solutions:
    u(t, x1..xn) -> u(t, r); the result is evaluated on the ray
    (x1, 0, ..., 0) = (r, 0, ..., 0), which is exact for invariant
    expressions."""
    dep = sys.deps[0]
    others = tuple(v for v in sys.ivars if v not in spatial)
    rsq = E_ZERO
    for v in spatial:
        rsq = rsq + Expr.var(v) ** 2
    rdef = rsq.pow(Fraction(1, 2))
    tmp = "_rad_" + dep
    G = sys.g_expr(0)
    e = replace_dependent(G, dep, Expr.jet(tmp), defs={radial: rdef},
                          spaces={tmp: others + (radial,)})
    for v in spatial[1:]:
        e = subs_var(e, v, E_ZERO)
    e = subs_var(e, spatial[0], Expr.var(radial))
    e = rename_dependent(e, tmp, dep)
    (ldep, lead), _ = sys.equations[0]
    lead_r = tuple((v if v != spatial[0] else radial, n) for v, n in lead
                   if v not in spatial[1:])
    from .diffops import partial_jet
    coef = partial_jet(e, dep, lead_r)
    if not (coef - E_ONE).is_zero:
        raise ExprError(
            f"radialized equation is not solved for the leading jet: {coef}")
    rhs = Expr.jet(dep, lead_r) - e
    return PdeSystem(others + (radial,), (dep,),
                     (((dep, lead_r), rhs),))


def radial_multiplier(Q: Expr, spatial: tuple, radial: str = "r") -> Expr:
    """Ray evaluation of a rotationally invariant multiplier, including the
    spherical measure factor r^(n-1)."""
    e = Q
    for v in spatial[1:]:
        e = subs_var(e, v, E_ZERO)
    e = subs_var(e, spatial[0], Expr.var(radial))
    n = len(spatial)
    return e * Expr.var(radial).pow(ExpLin.of(n - 1))


# ---------------------------------------------------------------------------
# reduction proper
# ---------------------------------------------------------------------------

def reduce_pde(sys: PdeSystem, rmap: ReductionMap,
               derived: Optional[dict] = None) -> ReducedODE:
    """Reduce the PDE to an ODE in the invariant: substitute the invariant
    solution form, factor out the common canonical-coordinate weight, and
    verify that nothing else depends on the canonical coordinates."""
    G = sys.g_expr(0)
    Gs = rmap.apply(G)
    weight, reduced = _factor_weight(Gs, rmap.canonical, derived)
    bad = [n for n in rmap.canonical if reduced.depends_on(n)]
    if bad:
        reduced2 = eliminate_derived(reduced, derived)
        bad = [n for n in rmap.canonical if reduced2.depends_on(n)]
        reduced = reduced2
    if bad:
        raise NotInvariant(
            f"reduced equation keeps canonical coordinates {bad}: {reduced}")
    order = reduced.max_order(rmap.new_dep)
    return ReducedODE(expr=_scale_ode(reduced), zeta=rmap.zeta,
                      dep=rmap.new_dep, weight=weight, order=order)


def _scale_ode(e: Expr) -> Expr:
    from .detsys import _primitive_multiplier
    return _primitive_multiplier(e)


def _factor_weight(e: Expr, canon: tuple, derived) -> tuple:
    """Split e = weight * rest where weight collects the canonical
    dependence (exponential atoms in rho/chi and plain powers); all terms
    must share one weight modulo the derived-parameter relations."""
    if e.is_zero:
        return E_ONE, e
    groups: dict = {}
    for m, c in e.terms:
        sig = []
        plain = []
        for b, ee in m:
            dep_c = False
            if b[0] == "v" and b[1] in canon:
                dep_c = True
            elif b[0] in ("p", "e", "l") and any(
                    b[1].depends_on(n) for n in canon):
                dep_c = True
            (sig if dep_c else plain).append((b, ee))
        groups.setdefault(tuple(sig), {})[tuple(plain)] = c
    sigs = sorted(groups, key=lambda s: tuple(
        (str(b), str(ee)) for b, ee in s))
    rep = sigs[0]
    rep_w = _sig_expr(rep)
    total = E_ZERO
    for sig in sigs:
        if sig != rep:
            ratio_ok = _same_weight(sig, rep, canon, derived)
            if not ratio_ok:
                raise NotInvariant(
                    "terms carry incompatible canonical weights: "
                    f"{_sig_expr(sig)} vs {rep_w}")
        total = total + Expr(dict(groups[sig]))
    return rep_w, total


def _sig_expr(sig) -> Expr:
    return Expr({tuple(sig): COEF_ONE})


def _same_weight(sig_a, sig_b, canon, derived) -> bool:
    """weights equal iff a / b == 1: var powers match and exponential
    arguments differ by zero modulo derived relations."""
    da = dict(sig_a)
    db = dict(sig_b)
    ea = [b for b in da if b[0] == "e"]
    eb = [b for b in db if b[0] == "e"]
    for b in set(da) | set(db):
        if b[0] == "e":
            continue
        if da.get(b) != db.get(b):
            return False
    arg_a = ea[0][1] if ea else E_ZERO
    arg_b = eb[0][1] if eb else E_ZERO
    if ea and da[ea[0]] != ExpLin.of(1):
        return False
    if eb and db[eb[0]] != ExpLin.of(1):
        return False
    return is_zero_mod(arg_a - arg_b, derived)


def transform_current(cur: ConservedCurrent, rmap: ReductionMap,
                      derived: Optional[dict] = None) -> ConservedCurrent:
    """Contravariant-density transformation to canonical variables, on the
    invariant solution space: new_a = (1/detJ) * sum_b (d new_a/d old_b) *
    old_b."""
    n = len(rmap.old_ivars)
    fw = dict(rmap.forward)
    rows = [[total_derivative(fw[a], b) for b in rmap.old_ivars]
            for a in rmap.new_ivars]
    det = _det(rows, n)
    if det.is_zero:
        raise SingularMap("Jacobian determinant vanishes identically")
    comps = []
    for i, a in enumerate(rmap.new_ivars):
        acc = E_ZERO
        for j, b in enumerate(rmap.old_ivars):
            old = cur.comp(b)
            if old.is_zero or rows[i][j].is_zero:
                continue
            acc = acc + rows[i][j] * old
        comps.append((a, acc))
    out = []
    for a, e in comps:
        e = rmap.apply(e / det)
        out.append((a, e))
    return ConservedCurrent(tuple(out))


def extract_first_integral(cur_new: ConservedCurrent, rmap: ReductionMap,
                           ode: ReducedODE, constant_name: str = "C",
                           derived: Optional[dict] = None,
                           multiplier: Expr = E_ZERO) -> FirstIntegral:
    """Psi = T-bar + integral of the canonical-coordinate divergence of the
    flux; the result must be free of the canonical coordinates."""
    tbar = cur_new.comp(rmap.zeta)
    spaces = {rmap.new_dep: (rmap.zeta,)}
    S = E_ZERO
    for w in rmap.canonical:
        S = S + total_derivative(cur_new.comp(w), w, spaces=spaces)
    if not is_zero_mod(S, derived):
        S2 = eliminate_derived(S, derived)
        integral = invert_divergence(
            S2, (rmap.zeta,), (rmap.new_dep,)).comp(rmap.zeta)
        psi = eliminate_derived(tbar, derived) + integral
    else:
        psi = tbar
    psi = eliminate_derived(psi, derived)
    bad = [nn for nn in rmap.canonical if psi.depends_on(nn)]
    if bad:
        raise ResidualCanonicalDependence(
            f"first integral keeps {bad}: {psi}")
    return FirstIntegral(psi=_scale_ode(psi), constant_name=constant_name,
                         multiplier=multiplier, route="current")


def first_integral_from_multiplier(Q: Expr, rmap: ReductionMap,
                                   ode: ReducedODE,
                                   constant_name: str = "C",
                                   derived: Optional[dict] = None) -> FirstIntegral:
    """Psi from the reduced multiplier: Q-bar = (weight / detJ) * Q on the
    invariant space; Q-bar * G-bar must be an exact zeta-derivative."""
    det = rmap.jacobian()
    qbar = rmap.apply(Q) * ode.weight / det
    qbar = eliminate_derived(qbar, derived)
    product = eliminate_derived(qbar * ode.expr, derived)
    bad = [nn for nn in rmap.canonical if product.depends_on(nn)]
    if bad:
        raise NotTotalDerivative(
            f"reduced multiplier product keeps {bad}: {product}")
    for res, val in euler_residues(product, ode.dep, (ode.zeta,)).items():
        if not is_zero_mod(val, derived):
            raise NotTotalDerivative(
                f"Q-bar * G-bar is not an exact derivative: residue {val}")
    psi = invert_divergence(
        product, (ode.zeta,), (ode.dep,)).comp(ode.zeta)
    return FirstIntegral(psi=_scale_ode(psi), constant_name=constant_name,
                         multiplier=Q, route="multiplier")


# ---------------------------------------------------------------------------
# verification and functional independence
# ---------------------------------------------------------------------------

def verify_first_integral(fi: FirstIntegral, ode: ReducedODE,
                          derived: Optional[dict] = None) -> Expr:
    """Return lambda with D_zeta(psi) = lambda * G-bar (cross-multiplied
    exact check); raises when psi is not a first integral."""
    dpsi = total_derivative(fi.psi, ode.zeta)
    if dpsi.is_zero:
        return E_ZERO
    lead = ode.leading()
    from .diffops import partial_jet
    A = partial_jet(dpsi, ode.dep, lead)
    Cc = partial_jet(ode.expr, ode.dep, lead)
    residual = Cc * dpsi - A * ode.expr
    if not is_zero_mod(residual, derived):
        raise NotTotalDerivative(
            f"D_zeta psi is not a multiple of the reduced equation: "
            f"residual {residual}")
    return A / Cc


def psis_equivalent(a: Expr, b: Expr, ode: ReducedODE,
                    derived: Optional[dict] = None) -> bool:
    """Equality up to an additive constant and a nonzero constant factor
    (constants may involve parameters)."""
    da = total_derivative(a, ode.zeta)
    db = total_derivative(b, ode.zeta)
    if da.is_zero and db.is_zero:
        return True
    if da.is_zero or db.is_zero:
        return False
    # find the scale from a shared leading monomial
    m, ca = da.terms[-1]
    cb = db.coefficient_of(m)
    if cb.is_zero:
        return False
    lam = ca / cb
    return is_zero_mod(da - Expr.from_coef(lam) * db, derived)


def functional_independence(psis: list, ode: ReducedODE,
                            derived: Optional[dict] = None,
                            names: Optional[list] = None) -> tuple:
    """Rank of d(psi_i)/d(U-jets) at random rational points, plus the
    polynomial relations of total degree <= 2 among the integrals."""
    from .model import rng_from_env
    jets = set()
    for p in psis:
        jets |= p.jets(ode.dep)
    jets = sorted(jets, key=lambda b: b[2])
    rank = 0
    rng = rng_from_env(7)
    params = set()
    exp_params = set()
    for p in psis:
        params |= p.params()
        for m, _c in p.terms:
            for _b, ee in m:
                exp_params |= ee.params()
    if derived:
        params -= set(derived)
    from .expr import eval_numeric, jet_name, DomainError
    for _try in range(25):
        point = {}
        for s in sorted(params):
            if s in exp_params:
                # keep powers exact: integer exponents only
                point[s] = Fraction(rng.randint(2, 7))
            else:
                point[s] = Fraction(rng.randint(1, 9), rng.randint(1, 3))
        if derived:
            ok = True
            for dn, dv in derived.items():
                try:
                    point[dn] = dv.eval(point)
                except (ZeroDivisionError, ExprError):
                    ok = False
                    break
            if not ok:
                continue
        point[ode.zeta] = Fraction(rng.randint(1, 9), rng.randint(1, 3))
        for b in jets:
            point[jet_name(b[1], b[2])] = Fraction(
                rng.randint(1, 9), rng.randint(1, 3))
        rows = []
        try:
            for p in psis:
                row = []
                for b in jets:
                    from .diffops import partial_jet
                    row.append(eval_numeric(
                        partial_jet(p, b[1], b[2]), point))
                rows.append(row)
        except (DomainError, ZeroDivisionError):
            continue
        rank = max(rank, _numeric_rank(rows))
    relations = _find_relations(psis, ode, derived, names)
    return rank, relations


def _numeric_rank(rows) -> int:
    m = [list(map(Fraction, r)) for r in rows]
    rank = 0
    cols = len(m[0]) if m else 0
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, len(m)):
            if m[i][c]:
                piv = i
                break
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        for i in range(len(m)):
            if i != r and m[i][c]:
                f = m[i][c] / m[r][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        r += 1
        rank += 1
    return rank


def _find_relations(psis: list, ode: ReducedODE, derived,
                    names: Optional[list]) -> list:
    """Nontrivial null combinations of {psi_i} and {psi_i psi_j}."""
    if names is None:
        names = [f"PSI{i + 1}" for i in range(len(psis))]
    cands = [E_ONE]
    labels = [((), "1")]
    for i, p in enumerate(psis):
        e = eliminate_derived(p, derived)
        if not e.is_zero:
            cands.append(e)
            labels.append(((i,), names[i]))
    for i in range(len(psis)):
        for j in range(i, len(psis)):
            e = eliminate_derived(psis[i] * psis[j], derived)
            if e.is_zero:
                continue
            cands.append(e)
            lab = f"{names[i]}*{names[j]}" if i != j else f"{names[i]}^2"
            labels.append(((i, j), lab))
    # build rows: monomial -> coefficients over candidates
    from .detsys import _eliminate, _null_space
    monos: dict = {}
    dens: dict = {}
    for e in cands:
        for _m, c in e.terms:
            for f, k in c.den:
                dens[f] = max(dens.get(f, 0), k)
    mult = COEF_ONE
    for f, k in sorted(dens.items(), key=lambda t: t[0].terms):
        mult = mult * Coef(f ** k)
    for ci, e in enumerate(cands):
        for m, c in e.terms:
            cc = c * mult
            monos.setdefault(m, {})[f"L{ci}"] = \
                monos.setdefault(m, {}).get(f"L{ci}", POLY_ONE * 0) + cc.num
    unknowns = tuple(f"L{i}" for i in range(len(cands)))
    rows = [row for row in monos.values()]
    pivots, ech, _piv = _eliminate(rows, unknowns, ())
    vectors = _null_space(ech, pivots, unknowns)
    out = []
    for vec in vectors:
        items = []
        for i, u in enumerate(unknowns):
            c = vec[u]
            if c.is_zero:
                continue
            items.append((labels[i][1], c))
        if not items:
            continue
        out.append(items)
    return out
