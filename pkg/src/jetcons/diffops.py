"""Differential-algebra operators on jet-space expressions.

Total derivatives (with optional chain rules for changes of variables),
prolongation of point symmetries, the Euler-Lagrange operator, Frechet
derivatives and adjoints, solved-form reduction, and inversion of total
divergences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .expr import (
    Coef, COEF_ONE, E_ONE, E_ZERO, ExpLin, Expr, ExprError, POLY_ONE, Poly,
    as_expr, explin_to_expr, is_zero_mod, jet_key, ln,
)


class NotADivergence(ExprError):
    pass


class IntegrationObstruction(ExprError):
    def __init__(self, msg, residual: Optional[Expr] = None):
        super().__init__(msg)
        self.residual = residual


class NotInvariant(ExprError):
    pass


# ---------------------------------------------------------------------------
# multi-index helpers
# ---------------------------------------------------------------------------

def midx_add(midx: tuple, var: str, n: int = 1) -> tuple:
    d = dict(midx)
    d[var] = d.get(var, 0) + n
    return tuple(sorted((v, k) for v, k in d.items() if k))


def midx_order(midx: tuple) -> int:
    return sum(n for _, n in midx)


# ---------------------------------------------------------------------------
# generic derivation over the term structure
# ---------------------------------------------------------------------------

def _derive(e: Expr, d_base) -> Expr:
    """Apply a derivation defined by its action on monomial bases."""
    out = E_ZERO
    for m, c in e.terms:
        for idx, (b, be) in enumerate(m):
            db = d_base(b)
            if db.is_zero:
                continue
            rest = []
            for j, (b2, e2) in enumerate(m):
                if j == idx:
                    if not (e2 - ExpLin.of(1)).is_zero:
                        rest.append((b2, e2 - ExpLin.of(1)))
                else:
                    rest.append((b2, e2))
            factor = Expr({tuple(rest): c * _explin_coef(be)})
            out = out + factor * db
    return out


def _explin_coef(e: ExpLin) -> Coef:
    p = Poly.const(e.offset)
    for n, k in e.terms:
        p = p + Poly.var(n) * k
    return Coef(p)


def total_derivative(e: Expr, v: str, chain: Optional[dict] = None,
                     spaces: Optional[dict] = None) -> Expr:
    """Total derivative D_v.  `chain` maps auxiliary variable names w to
    D_v(w); `spaces` maps dependents to the variables they depend on
    (dependents not listed respond to every direct direction)."""

    def d_base(b: tuple) -> Expr:
        tag = b[0]
        if tag == "v":
            if b[1] == v:
                return E_ONE
            if chain and b[1] in chain:
                return as_expr(chain[b[1]])
            return E_ZERO
        if tag == "w" or tag == "q":
            return E_ZERO
        if tag == "j":
            dep, midx = b[1], b[2]
            out = E_ZERO
            dep_vars = spaces.get(dep) if spaces else None
            if dep_vars is None or v in dep_vars:
                out = out + Expr.jet(dep, midx_add(midx, v))
            if chain:
                for w, dw in chain.items():
                    if w == v:
                        continue
                    if dep_vars is not None and w in dep_vars:
                        out = out + Expr.jet(dep, midx_add(midx, w)) * \
                            as_expr(dw)
            return out
        if tag == "p":
            return total_derivative(b[1], v, chain, spaces)
        if tag == "e":
            da = total_derivative(b[1], v, chain, spaces)
            if da.is_zero:
                return E_ZERO
            return Expr({((b, ExpLin.of(1)),): COEF_ONE}) * da
        if tag == "l":
            da = total_derivative(b[1], v, chain, spaces)
            if da.is_zero:
                return E_ZERO
            return da / b[1]
        raise ExprError(f"unknown base {b}")

    return _derive(e, d_base)


def apply_midx(e: Expr, midx: tuple, sign: bool = False,
               chain: Optional[dict] = None,
               spaces: Optional[dict] = None) -> Expr:
    """D_midx(e), optionally (-D)_midx."""
    out = e
    for v, n in midx:
        for _ in range(n):
            out = total_derivative(out, v, chain, spaces)
    if sign and midx_order(midx) % 2:
        return -out
    return out


def partial_jet(e: Expr, dep: str, midx: tuple) -> Expr:
    """Partial derivative with respect to one jet coordinate."""
    target = jet_key(dep, midx)

    def d_base(b: tuple) -> Expr:
        if b == target:
            return E_ONE
        if b[0] == "p":
            return partial_jet(b[1], dep, midx)
        if b[0] == "e":
            da = partial_jet(b[1], dep, midx)
            if da.is_zero:
                return E_ZERO
            return Expr({((b, ExpLin.of(1)),): COEF_ONE}) * da
        if b[0] == "l":
            da = partial_jet(b[1], dep, midx)
            if da.is_zero:
                return E_ZERO
            return da / b[1]
        return E_ZERO

    return _derive(e, d_base)


def partial_var(e: Expr, name: str) -> Expr:
    """Explicit partial derivative with respect to an independent variable
    (jets held fixed)."""

    def d_base(b: tuple) -> Expr:
        if b[0] == "v" and b[1] == name:
            return E_ONE
        if b[0] == "p":
            return partial_var(b[1], name)
        if b[0] == "e":
            da = partial_var(b[1], name)
            if da.is_zero:
                return E_ZERO
            return Expr({((b, ExpLin.of(1)),): COEF_ONE}) * da
        if b[0] == "l":
            da = partial_var(b[1], name)
            if da.is_zero:
                return E_ZERO
            return da / b[1]
        return E_ZERO

    return _derive(e, d_base)


# ---------------------------------------------------------------------------
# Euler-Lagrange operator, Frechet derivative and adjoint
# ---------------------------------------------------------------------------

def euler_operator(e: Expr, dep: str) -> Expr:
    """E_dep(e) = sum over jets of (-D)_midx(de/d(jet))."""
    out = E_ZERO
    for b in sorted(e.jets(dep), key=lambda b: b[2]):
        p = partial_jet(e, dep, b[2])
        if p.is_zero:
            continue
        out = out + apply_midx(p, b[2], sign=True)
    return out


def euler_residues(e: Expr, dep: str, directions: tuple) -> dict:
    """Euler operators of the jet towers of `dep` along `directions`,
    treating derivatives in the remaining variables as independent
    dependents.  Returns {residual multi-index: Euler expression}; the
    expression vanishes for every residue iff e is a total divergence in
    the given directions."""
    groups: dict = {}
    for b in e.jets(dep):
        res = tuple((v, n) for v, n in b[2] if v not in directions)
        sub = tuple((v, n) for v, n in b[2] if v in directions)
        groups.setdefault(res, []).append(sub)
    out = {}
    for res, subs in groups.items():
        total = E_ZERO
        for sub in sorted(set(subs)):
            full = tuple(sorted(res + sub))
            p = partial_jet(e, dep, full)
            if p.is_zero:
                continue
            # derivatives taken along the chosen directions only
            total = total + apply_midx(p, sub, sign=True)
        out[res] = total
    return out


def frechet(G: Expr, P: Expr, dep: str) -> Expr:
    """Linearization of G at u in direction P: sum dG/du_J * D_J P."""
    out = E_ZERO
    for b in sorted(G.jets(dep), key=lambda b: b[2]):
        coef = partial_jet(G, dep, b[2])
        if coef.is_zero:
            continue
        out = out + coef * apply_midx(P, b[2])
    return out


def frechet_adjoint(G: Expr, Q: Expr, dep: str) -> Expr:
    """Formal adjoint: sum (-D)_J (Q * dG/du_J)."""
    out = E_ZERO
    for b in sorted(G.jets(dep), key=lambda b: b[2]):
        coef = partial_jet(G, dep, b[2])
        if coef.is_zero:
            continue
        out = out + apply_midx(Q * coef, b[2], sign=True)
    return out


# ---------------------------------------------------------------------------
# Point symmetries and PDE systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointSymmetry:
    """Generator sum(xi[i] d/dx_i) + sum(eta[dep] d/du_dep); coefficients
    depend only on independent variables and zeroth-order jets."""
    name: str
    xi: tuple          # tuple[(ivar, Expr)]
    eta: tuple         # tuple[(dep, Expr)]
    invariance_shift: Expr = field(default_factory=lambda: E_ZERO)

    def xi_map(self) -> dict:
        return dict(self.xi)

    def eta_map(self) -> dict:
        return dict(self.eta)

    def characteristic(self, dep: str) -> Expr:
        char = self.eta_map().get(dep, E_ZERO)
        for v, xi in self.xi:
            char = char - xi * Expr.jet(dep, ((v, 1),))
        return char

    def divergence(self) -> Expr:
        out = E_ZERO
        for v, xi in self.xi:
            out = out + total_derivative(xi, v)
        return out


def make_symmetry(name: str, xi: dict, eta: dict,
                  shift: Expr = None) -> PointSymmetry:
    return PointSymmetry(
        name,
        tuple(sorted((v, as_expr(x)) for v, x in xi.items())),
        tuple(sorted((d, as_expr(x)) for d, x in eta.items())),
        E_ZERO if shift is None else as_expr(shift),
    )


def prolong(X: PointSymmetry, e: Expr) -> Expr:
    """pr X(e) in characteristic form:
    sum xi^i D_i(e) + sum_J D_J(char_dep) * de/du_J."""
    out = E_ZERO
    for v, xi in X.xi:
        if xi.is_zero:
            continue
        out = out + xi * total_derivative(e, v)
    deps = {b[1] for b in e.jets()}
    for dep in sorted(deps):
        char = X.characteristic(dep)
        if char.is_zero:
            continue
        for b in sorted(e.jets(dep), key=lambda b: b[2]):
            p = partial_jet(e, dep, b[2])
            if p.is_zero:
                continue
            out = out + apply_midx(char, b[2]) * p
    return out


def commutator(X1: PointSymmetry, X2: PointSymmetry,
               ivars: tuple, deps: tuple) -> PointSymmetry:
    """Lie bracket [X1, X2] of point symmetry generators."""
    xi = {}
    for v in ivars:
        a = X1.xi_map().get(v, E_ZERO)
        b = X2.xi_map().get(v, E_ZERO)
        xi[v] = prolong(X1, b) - prolong(X2, a)
    eta = {}
    for d in deps:
        a = X1.eta_map().get(d, E_ZERO)
        b = X2.eta_map().get(d, E_ZERO)
        eta[d] = prolong(X1, b) - prolong(X2, a)
    return make_symmetry(f"[{X1.name},{X2.name}]", xi, eta)


@dataclass(frozen=True)
class PdeSystem:
    """PDEs in solved form lead = rhs, triangular in the leading jets."""
    ivars: tuple                 # ordered independent variable names
    deps: tuple                  # dependent variable names
    equations: tuple             # tuple[((dep, midx), Expr rhs)]

    def __post_init__(self):
        for (dep, midx), rhs in self.equations:
            key = jet_key(dep, midx)
            for b in rhs.jets(dep):
                if _descends(b[2], midx):
                    raise ExprError(
                        f"rhs of {dep} equation contains the leading "
                        f"derivative or a descendant: {b}")

    def g_expr(self, k: int = 0) -> Expr:
        (dep, midx), rhs = self.equations[k]
        return Expr.jet(dep, midx) - rhs

    def leading(self, k: int = 0) -> tuple:
        return self.equations[k][0]

    def principal_rule(self, b: tuple):
        """If jet base b is a descendant of a leading jet, return
        (equation index, extra multi-index)."""
        for k, ((dep, midx), _rhs) in enumerate(self.equations):
            if b[1] != dep:
                continue
            extra = _midx_sub(b[2], midx)
            if extra is not None:
                return k, extra
        return None

    def reduce(self, e: Expr, cache: Optional[dict] = None) -> Expr:
        """Eliminate leading derivatives and their descendants."""
        if cache is None:
            cache = {}
        changed = True
        while changed:
            changed = False
            principal = [b for b in e.jets() if self.principal_rule(b)]
            if not principal:
                break
            rules = {}
            for b in principal:
                if b not in cache:
                    k, extra = self.principal_rule(b)
                    rhs = self.equations[k][1]
                    cache[b] = apply_midx(rhs, extra)
                rules[b] = cache[b]
            e = _replace_jet_bases(e, rules)
            changed = True
        return e


def _descends(midx: tuple, lead: tuple) -> bool:
    d = dict(midx)
    return all(d.get(v, 0) >= n for v, n in lead)


def _midx_sub(midx: tuple, lead: tuple) -> Optional[tuple]:
    d = dict(midx)
    for v, n in lead:
        if d.get(v, 0) < n:
            return None
        d[v] = d[v] - n
    return tuple(sorted((v, n) for v, n in d.items() if n))


def _replace_jet_bases(e: Expr, rules: dict) -> Expr:
    """Replace whole jet bases by expressions (exponents distribute)."""
    out = E_ZERO
    for m, c in e.terms:
        factor = E_ONE
        rest = []
        for b, ee in m:
            if b[0] == "j" and b in rules:
                factor = factor * as_expr(rules[b]).pow(ee)
            elif b[0] in ("p", "e", "l") and b[1].jets() and \
                    any(k in rules for k in b[1].jets()):
                arg = _replace_jet_bases(b[1], rules)
                if b[0] == "p":
                    factor = factor * arg.pow(ee)
                elif b[0] == "e":
                    from .expr import exp as _exp
                    factor = factor * _exp(arg)
                else:
                    factor = factor * ln(arg).pow(ee)
            else:
                rest.append((b, ee))
        out = out + Expr({tuple(rest): c}) * factor
    return out


@dataclass(frozen=True)
class ConservedCurrent:
    """Current components keyed in the order of the system's variables."""
    components: tuple            # tuple[(ivar, Expr)]

    def comp(self, v: str) -> Expr:
        for name, e in self.components:
            if name == v:
                return e
        return E_ZERO

    def divergence(self) -> Expr:
        out = E_ZERO
        for v, e in self.components:
            out = out + total_derivative(e, v)
        return out

    def map_components(self, f) -> "ConservedCurrent":
        return ConservedCurrent(tuple((v, f(e)) for v, e in self.components))


def derive_r_factor(X: PointSymmetry, sys: PdeSystem,
                    derived: Optional[dict] = None) -> Expr:
    """R with pr X(G) = R * G for the (scalar) solved-form G; raises
    NotInvariant when no such factor exists (modulo the defining relations
    of derived parameters)."""
    if len(sys.equations) != 1:
        raise ExprError("r_factor requires a scalar system")
    G = sys.g_expr(0)
    (dep, lead), _ = sys.equations[0]
    P = prolong(X, G)
    if P.is_zero:
        return E_ZERO
    R = partial_jet(P, dep, lead)
    residual = P - R * G
    if not is_zero_mod(residual, derived):
        raise NotInvariant(
            f"pr {X.name}(G) is not a multiple of G; residual {residual}")
    return R


# ---------------------------------------------------------------------------
# Substitution (public operation)
# ---------------------------------------------------------------------------

def subs_var(e: Expr, name: str, repl: Expr) -> Expr:
    """Replace an independent variable everywhere (atoms included)."""
    repl = as_expr(repl)
    if repl.depends_on(name):
        from .expr import CyclicRule
        raise CyclicRule(f"replacement for {name} contains itself")
    out = E_ZERO
    for m, c in e.terms:
        factor = E_ONE
        rest = []
        for b, ee in m:
            if b[0] == "v" and b[1] == name:
                factor = factor * repl.pow(ee)
            elif b[0] in ("p", "e", "l") and b[1].depends_on(name):
                arg = subs_var(b[1], name, repl)
                if b[0] == "p":
                    factor = factor * arg.pow(ee)
                elif b[0] == "e":
                    from .expr import exp as _exp
                    factor = factor * _exp(arg)
                else:
                    factor = factor * ln(arg).pow(ee)
            else:
                rest.append((b, ee))
        out = out + Expr({tuple(rest): c}) * factor
    return out


def replace_dependent(e: Expr, dep: str, value: Expr,
                      defs: Optional[dict] = None,
                      spaces: Optional[dict] = None) -> Expr:
    """Replace u and all its jets by derivative consequences of `value`.

    `defs` maps auxiliary invariant names to their expressions in the base
    variables; derivatives chain through them.  `spaces` declares the
    variables each new dependent inside `value` depends on."""
    value = as_expr(value)
    if dep in {b[1] for b in value.jets()}:
        from .expr import CyclicRule
        raise CyclicRule(f"replacement for {dep} contains its own jets")
    chains: dict = {}
    cache: dict = {(): value}

    def chain_for(v: str) -> dict:
        if v not in chains:
            chains[v] = {w: total_derivative(d, v) for w, d in
                         (defs or {}).items()}
        return chains[v]

    def d_value(midx: tuple) -> Expr:
        if midx in cache:
            return cache[midx]
        # peel one derivative in the first listed direction
        v, n = midx[0]
        prev = _midx_sub(midx, ((v, 1),))
        base = d_value(prev if prev is not None else ())
        out = total_derivative(base, v, chain=chain_for(v), spaces=spaces)
        cache[midx] = out
        return out

    rules = {b: d_value(b[2]) for b in e.jets(dep)}
    return _replace_jet_bases(e, rules)


def substitute(e: Expr, rules, defs: Optional[dict] = None,
               spaces: Optional[dict] = None) -> Expr:
    """Simultaneous substitution.  Each rule target is a variable, a
    dependent (zero-order jet), or a leading jet (solved form); derivative
    consequences of jet rules are applied to closure."""
    var_rules = []
    dep_rules = []
    lead_rules = []
    for target, repl in rules:
        target = as_expr(target)
        repl = as_expr(repl)
        if len(target.terms) != 1:
            raise ExprError(f"substitution target must be atomic: {target}")
        m, c = target.terms[0]
        if c != COEF_ONE or len(m) != 1 or m[0][1] != ExpLin.of(1):
            raise ExprError(f"substitution target must be atomic: {target}")
        b = m[0][0]
        if b[0] == "v":
            var_rules.append((b[1], repl))
        elif b[0] == "j" and not b[2]:
            dep_rules.append((b[1], repl))
        elif b[0] == "j":
            lead_rules.append(((b[1], b[2]), repl))
        else:
            raise ExprError(f"unsupported substitution target: {target}")
    out = e
    for (dep, midx), rhs in lead_rules:
        ivars = tuple(sorted({v for v, _ in midx} |
                             {v for b in e.jets() for v, _ in b[2]} |
                             set()))
        sys = PdeSystem(ivars=ivars, deps=(dep,),
                        equations=(((dep, midx), rhs),))
        out = sys.reduce(out)
    for dep, value in dep_rules:
        out = replace_dependent(out, dep, value, defs=defs, spaces=spaces)
    for name, repl in var_rules:
        out = subs_var(out, name, repl)
    return out


# ---------------------------------------------------------------------------
# Inversion of total divergences
# ---------------------------------------------------------------------------

def jet_degree(m: tuple) -> ExpLin:
    deg = ExpLin.of(0)
    for b, e in m:
        if b[0] == "j":
            deg = deg + e
        elif b[0] in ("p", "e", "l") and b[1].jets():
            raise IntegrationObstruction(
                "cannot invert a divergence containing jets inside "
                f"opaque atoms: {b}")
    return deg


def invert_divergence(e: Expr, ivars: tuple, deps: tuple) -> ConservedCurrent:
    """Find components with sum_i D_i(comp_i) == e identically; the input
    must pass the Euler test for every dependent."""
    for dep in deps:
        r = euler_operator(e, dep)
        if not r.is_zero:
            raise NotADivergence(
                f"Euler test fails for {dep}: residual {r}")
    comps = {v: E_ZERO for v in ivars}
    groups: dict = {}
    for m, c in e.terms:
        deg = jet_degree(m)
        groups.setdefault(deg.key(), [ExpLin(deg.offset, deg.terms), {}])[1][m] = c
    for _key, (deg, terms) in sorted(groups.items()):
        f = Expr(terms)
        if deg.is_zero:
            if any(b[0] == "j" for mm in terms for b, _ in mm):
                raise IntegrationObstruction(
                    "jet-degree-zero piece with jets cannot be inverted "
                    f"by scaling: {f}")
            comps[ivars[0]] = comps[ivars[0]] + integrate_var(f, ivars[0])
            continue
        inv = Coef(POLY_ONE, ((_explin_poly(deg), 1),))
        for dep in deps:
            for b in sorted(f.jets(dep), key=lambda b: b[2]):
                g = partial_jet(f, dep, b[2])
                if g.is_zero:
                    continue
                for v, w in _transfer(dep, b[2], g, ivars):
                    comps[v] = comps[v] + Expr.from_coef(inv) * w
    cur = ConservedCurrent(tuple((v, comps[v]) for v in ivars))
    residual = cur.divergence() - e
    if not residual.is_zero:
        raise IntegrationObstruction(
            "divergence inversion left a residual", residual)
    return cur


def _explin_poly(e: ExpLin) -> Poly:
    p = Poly.const(e.offset)
    for n, c in e.terms:
        p = p + Poly.var(n) * c
    return p


def _transfer(dep: str, midx: tuple, g: Expr, ivars: tuple) -> list:
    """Witness components for u_J * g - (-1)^|J| u * D_J(g) = Div(W),
    built by peeling the first variable direction of J."""
    if not midx:
        return []
    v = next(vv for vv in ivars if dict(midx).get(vv))
    prev = _midx_sub(midx, ((v, 1),)) or ()
    out = [(v, Expr.jet(dep, prev) * g)]
    for vv, w in _transfer(dep, prev, total_derivative(g, v), ivars):
        out.append((vv, -w))
    return out


def integrate_var(f: Expr, v: str) -> Expr:
    """Integrate a jet-free expression in one variable (power rule; the
    exponent -1 yields a logarithm)."""
    out = E_ZERO
    for m, c in f.terms:
        vexp = None
        rest = []
        for b, ee in m:
            if b[0] == "v" and b[1] == v:
                vexp = ee
            else:
                if b[0] in ("p", "e", "l") and b[1].depends_on(v):
                    raise IntegrationObstruction(
                        f"cannot integrate atom {b} in {v}")
                rest.append((b, ee))
        if vexp is None:
            out = out + Expr({tuple(rest): c}) * Expr.var(v)
        elif (vexp + ExpLin.of(1)).is_zero:
            out = out + Expr({tuple(rest): c}) * ln(Expr.var(v))
        else:
            e1 = vexp + ExpLin.of(1)
            inv = Coef(POLY_ONE, ((_explin_poly(e1), 1),)) if not e1.is_constant \
                else Coef.const(1 / e1.offset)
            out = out + Expr({tuple(rest + [(("v", v), e1)]): c * inv})
    return out


def is_total_derivative_1d(e: Expr, deps: tuple, var: str) -> bool:
    """Exactness test in a single variable: all Euler residues vanish."""
    for dep in deps:
        for res, val in euler_residues(e, dep, (var,)).items():
            if not val.is_zero:
                return False
    return True


def invert_1d(e: Expr, var: str, deps: tuple) -> Expr:
    """Potential F with D_var F == e, for expressions in one base variable
    (other symbols ride along as constants)."""
    cur = invert_divergence(e, (var,), deps)
    return cur.comp(var)


def is_trivial_current(cur: ConservedCurrent, sys: PdeSystem) -> bool:
    """A current is trivial on solutions when it is a null divergence
    (identically divergence-free), or when its on-shell divergence
    vanishes and the on-shell density is a spatial divergence."""
    if cur.divergence().is_zero:
        return True
    onshell = cur.map_components(sys.reduce)
    if not sys.reduce(onshell.divergence()).is_zero:
        return False
    t = onshell.components[0][1]
    spatial = tuple(v for v, _ in onshell.components[1:])
    if not spatial:
        return sys.reduce(t).is_zero
    for dep in sys.deps:
        for _res, val in euler_residues(t, dep, spatial).items():
            if not sys.reduce(val).is_zero:
                return False
    return True
