"""Build and solve the joint determining system for symmetry-invariant
conservation-law multipliers.

The system couples the multiplier determining equation (the Euler operator
annihilates Q*G identically) with one invariance condition per symmetry
generator, restricted to the solution space.  Splitting over monomials in
the free jet coordinates and independent variables produces a linear
homogeneous system for the unknown coefficients, with entries polynomial
in the parameters; it is solved by fraction-free elimination with case
splitting on parameter-dependent pivots and on exponent coincidences.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .diffops import (
    PdeSystem, PointSymmetry, derive_r_factor, euler_operator, prolong,
)
from .expr import (
    Coef, COEF_ONE, E_ZERO, ExpLin, Expr, ExprError, Poly, POLY_ONE,
    POLY_ZERO, light_factor,
)
from .model import (
    Constraint, MultiplierAnsatz, Problem, Unsatisfiable, satisfiable,
    specialize,
)


class AnsatzDependsOnLeading(ExprError):
    pass


class BranchDepthExceeded(ExprError):
    pass


@dataclass(frozen=True)
class DeterminingSystem:
    unknowns: tuple                  # coefficient names
    rows: tuple                      # tuple[dict unknown -> Poly]
    coincidences: tuple              # tuple[Poly] candidate degenerations


@dataclass(frozen=True)
class Branch:
    constraints: tuple               # tuple[Constraint], outermost first
    nonzeros: tuple                  # tuple[Poly] pivot nonvanishing
    multipliers: tuple               # tuple[Expr], linearly independent
    problem: Problem                 # specialized problem for this branch
    resolution: tuple = ()           # tuple[(name, Coef)] eliminated params
    unresolved: bool = False

    @property
    def dimension(self) -> int:
        return len(self.multipliers)


@dataclass(frozen=True)
class CaseTree:
    generic: Branch
    branches: tuple                  # constrained branches, pruned

    def all_branches(self) -> tuple:
        return (self.generic,) + self.branches


def _unknown_names(n: int, taken) -> tuple:
    prefix = "c"
    while any(f"{prefix}{i}" in taken for i in range(1, n + 1)):
        prefix = "c_" + prefix
    return tuple(f"{prefix}{i}" for i in range(1, n + 1))


def invariance_condition(Q: Expr, X: PointSymmetry, sys: PdeSystem,
                         derived: Optional[dict] = None) -> Expr:
    """Q-tilde restricted to the solution space: pr X(Q) +
    (R_X + sum_i D_i xi^i) Q, minus the structure-constant shift for the
    second generator of a solvable pair."""
    R = derive_r_factor(X, sys, derived)
    cond = prolong(X, Q) + (R + X.divergence() - X.invariance_shift) * Q
    return sys.reduce(cond)


def build_determining_system(ansatz: MultiplierAnsatz, sys: PdeSystem,
                             algebra, derived: Optional[dict] = None,
                             unknowns: Optional[tuple] = None,
                             eliminate=None) -> DeterminingSystem:
    """Collect E_dep(Q*G) (an identity on jet space) and the per-generator
    invariance conditions (restricted to solutions) into linear equations
    for the ansatz coefficients."""
    if len(sys.equations) != 1:
        raise ExprError("multiplier search requires a scalar system")
    for b in ansatz.basis:
        for jk in b.jets():
            if sys.principal_rule(jk):
                raise AnsatzDependsOnLeading(
                    f"ansatz term {b} contains a leading derivative "
                    f"descendant {jk}")
    if unknowns is None:
        taken = set()
        for b in ansatz.basis:
            taken |= b.params()
        unknowns = _unknown_names(len(ansatz.basis), taken)
    Q = E_ZERO
    for name, b in zip(unknowns, ansatz.basis):
        Q = Q + Expr.param(name) * b
    G = sys.g_expr(0)
    dep = sys.deps[0] if len(sys.deps) == 1 else None
    equations = []
    for d in sys.deps:
        equations.append(euler_operator(Q * G, d))
    for X in algebra:
        equations.append(invariance_condition(Q, X, sys, derived))
    rows: dict = {}
    coincidence: dict = {}
    for eq in equations:
        if eliminate is not None:
            eq = eliminate(eq)
        eq = _clear_denominators(eq)
        _collect_rows(eq, unknowns, rows, coincidence)
    return DeterminingSystem(
        unknowns=tuple(unknowns),
        rows=tuple(rows.values()),
        coincidences=tuple(sorted(coincidence.values(),
                                  key=lambda p: p.terms)),
    )


def _clear_denominators(e: Expr) -> Expr:
    dens: dict = {}
    for _m, c in e.terms:
        for f, k in c.den:
            dens[f] = max(dens.get(f, 0), k)
    if not dens:
        return e
    mult = COEF_ONE
    for f, k in dens.items():
        mult = mult * Coef(f ** k)
    return Expr({m: c * mult for m, c in e.terms})


def _collect_rows(eq: Expr, unknowns, rows: dict, coincidence: dict) -> None:
    """Split an equation over its monomials; record candidate coincidences
    between parametric exponents of the same base."""
    uset = set(unknowns)
    # candidate coincidences: pairwise differences of exponents per base
    by_base: dict = {}
    for m, _c in eq.terms:
        for b, ee in m:
            by_base.setdefault(b, set()).add(ee)
    for b, exps in by_base.items():
        exps = sorted(exps, key=lambda e: e.key())
        exps.append(ExpLin.of(0))
        for i in range(len(exps)):
            for j in range(i + 1, len(exps)):
                d = exps[i] - exps[j]
                if d.is_constant or not d.terms:
                    continue
                p = _explin_poly(d).primitive()[1]
                if p.is_const:
                    continue
                coincidence.setdefault(p.terms, p)
    for m, c in eq.terms:
        if c.den:
            raise ExprError("internal: denominators survived clearing")
        row: dict = {}
        for pmono, k in c.num.terms:
            hits = [n for n, _e in pmono if n in uset]
            if len(hits) != 1 or dict(pmono)[hits[0]] != 1:
                raise ExprError(
                    f"determining equation is not linear homogeneous in the "
                    f"unknowns: coefficient {c.num}")
            rest = tuple((n, e) for n, e in pmono if n not in uset)
            u = hits[0]
            row[u] = row.get(u, POLY_ZERO) + Poly({rest: k})
        row = {u: p for u, p in row.items() if not p.is_zero}
        if not row:
            continue
        key = _row_key(row)
        if key not in rows:
            rows[key] = row


def _explin_poly(e: ExpLin) -> Poly:
    p = Poly.const(e.offset)
    for n, c in e.terms:
        p = p + Poly.var(n) * c
    return p


def _row_normalize(row: dict) -> dict:
    """Remove the common rational content and common parameter monomial."""
    num = 0
    den = 1
    for p in row.values():
        c = p.content()
        num = _gcd_int(num, abs(c.numerator))
        den = _lcm_int(den, c.denominator)
    scale = Fraction(num, den)
    first = row[min(row)]
    if first.leading()[1] < 0:
        scale = -scale
    if scale not in (0, 1):
        row = {u: p * (1 / scale) for u, p in row.items()}
    return row


def _gcd_int(a, b):
    while b:
        a, b = b, a % b
    return abs(a)


def _lcm_int(a, b):
    return a * b // _gcd_int(a, b) if a and b else max(abs(a), abs(b))


def _row_key(row: dict):
    row = _row_normalize(row)
    return tuple(sorted((u, p.terms) for u, p in row.items()))


# ---------------------------------------------------------------------------
# fraction-free elimination over the parameter field
# ---------------------------------------------------------------------------

def _eliminate(rows: list, unknowns: tuple, assumed_nonzero) -> tuple:
    """Fraction-free Gaussian elimination; pivots are assumed nonzero and
    reported.  Returns (pivot list [(row, unknown)], echelon rows,
    pivot polys used)."""
    work = [dict(r) for r in rows]
    order = {u: i for i, u in enumerate(unknowns)}
    pivots = []
    pivot_polys = []
    used = [False] * len(work)
    prev_pivot: Poly = POLY_ONE
    while True:
        best = None
        for i, r in enumerate(work):
            if used[i] or not r:
                continue
            key = (len(r), min(_poly_size(p) for p in r.values()), i)
            if best is None or key < best[0]:
                # choose the entry: smallest poly, then unknown order
                entries = sorted(
                    r.items(), key=lambda t: (_poly_size(t[1]), order[t[0]]))
                best = (key, i, entries[0][0])
        if best is None:
            break
        _, i, u = best
        used[i] = True
        piv = work[i][u]
        pivots.append((i, u))
        for f, _k in light_factor(piv):
            if f.is_const:
                continue
            if not any(f == g for g in pivot_polys) and \
                    not any(f == g for g in assumed_nonzero):
                pivot_polys.append(f)
        for j, r in enumerate(work):
            if j == i or u not in r:
                continue
            entry = r.pop(u)
            new = {}
            for k in set(r) | set(work[i]):
                if k == u:
                    continue
                v = r.get(k, POLY_ZERO) * piv - \
                    work[i].get(k, POLY_ZERO) * entry
                if not v.is_zero:
                    new[k] = v
            # Bareiss: divide by the previous pivot when exact
            if not prev_pivot.is_const:
                reduced = {}
                ok = True
                for k, v in new.items():
                    q = v.exact_div(prev_pivot)
                    if q is None:
                        ok = False
                        break
                    reduced[k] = q
                if ok:
                    new = reduced
            if new:
                new = _row_normalize(new)
            work[j] = new
        prev_pivot = piv
    return pivots, work, pivot_polys


def _poly_size(p: Poly):
    return (len(p.terms), _pm_total(p))


def _pm_total(p: Poly) -> int:
    return max((sum(e for _n, e in m) for m, _c in p.terms), default=0)


def _null_space(rows: list, pivots: list, unknowns: tuple) -> list:
    """Null-space basis as coefficient maps {unknown: Coef}, denominators
    cleared, one vector per free unknown (ascending order)."""
    pivot_map = {u: i for i, u in pivots}
    free = [u for u in unknowns if u not in pivot_map]
    basis = []
    for fu in free:
        vec = {u: Coef(POLY_ZERO) for u in unknowns}
        vec[fu] = COEF_ONE
        # pivot rows are mutually independent after full elimination
        for u, i in pivot_map.items():
            row = rows[i]
            acc = Coef(POLY_ZERO)
            for k, p in row.items():
                if k == u:
                    continue
                if vec[k].is_zero:
                    continue
                acc = acc + Coef(p) * vec[k]
            piv = Coef(row[u])
            vec[u] = (-acc) / piv
        # clear denominators deterministically
        dens: dict = {}
        for v in vec.values():
            for f, k in v.den:
                dens[f] = max(dens.get(f, 0), k)
        mult = COEF_ONE
        for f, k in sorted(dens.items(), key=lambda t: t[0].terms):
            mult = mult * Coef(f ** k)
        vec = {u: v * mult for u, v in vec.items()}
        basis.append(vec)
    return basis


def solve_determining(ds: DeterminingSystem, assumed_nonzero=()) -> tuple:
    """Generic solve: returns (vectors, pivot polys that were assumed
    nonzero)."""
    pivots, rows, pivot_polys = _eliminate(
        list(ds.rows), ds.unknowns, tuple(assumed_nonzero))
    vectors = _null_space(rows, pivots, ds.unknowns)
    return vectors, pivot_polys


# ---------------------------------------------------------------------------
# classification driver
# ---------------------------------------------------------------------------

def find_multipliers(problem: Problem, branch_depth: int = 3) -> CaseTree:
    """Classify symmetry-invariant multipliers: generic solve plus case
    splitting on pivot factors and exponent coincidences."""
    leaves = _explore(problem, (), (), branch_depth)
    generic = leaves[0]
    # semantic deduplication: identical parameter resolutions
    seen = {}
    deduped = []
    for leaf in leaves[1:]:
        key = _resolution_key(leaf.resolution)
        if key in seen:
            continue
        seen[key] = leaf
        deduped.append(leaf)
    constrained = _prune(deduped, [generic] + deduped)
    return CaseTree(generic=generic, branches=tuple(constrained))


def _explore(problem: Problem, constraints: tuple, resolution: tuple,
             depth: int) -> list:
    ds = build_determining_system(
        problem.ansatz, problem.system, problem.algebra,
        problem.derived_map(), eliminate=problem.eliminate)
    assumed = [a.poly for a in problem.assumptions]
    vectors, pivot_polys = solve_determining(ds, assumed)
    raw = [_vector_to_multiplier(v, ds.unknowns, problem) for v in vectors]
    multipliers = independent_exprs(raw)
    candidates = []
    seen = set()
    for p in list(ds.coincidences) + list(pivot_polys):
        for f, _k in light_factor(p):
            if f.is_const:
                continue
            if f.terms in seen:
                continue
            seen.add(f.terms)
            candidates.append(f)
    leaf = Branch(constraints=constraints, nonzeros=tuple(pivot_polys),
                  multipliers=tuple(multipliers), problem=problem,
                  resolution=resolution,
                  unresolved=bool(depth <= 0 and candidates))
    leaves = [leaf]
    if depth <= 0:
        return leaves
    for f in candidates:
        if not satisfiable(f, problem):
            continue
        try:
            spec, name, value = specialize(problem, f)
        except Unsatisfiable:
            continue
        res2 = _compose_resolution(resolution, name, value)
        sub = _explore(spec, constraints + (Constraint(f),), res2, depth - 1)
        leaves.extend(sub)
    return leaves


def _compose_resolution(resolution: tuple, name: str, value) -> tuple:
    from .expr import _coef_subs_coef
    if isinstance(value, str):
        cval = Coef.param(value)
    elif isinstance(value, Coef):
        cval = value
    else:
        cval = Coef.const(value)
    out = []
    for n, v in resolution:
        out.append((n, _coef_subs_coef(v, {name: cval})))
    out.append((name, cval))
    return tuple(sorted(out))


def _resolution_key(resolution: tuple):
    return tuple((n, v.num.terms, tuple((f.terms, e) for f, e in v.den))
                 for n, v in resolution)


def _vector_to_multiplier(vec: dict, unknowns: tuple,
                          problem: Problem) -> Expr:
    out = E_ZERO
    for name, b in zip(unknowns, problem.ansatz.basis):
        c = vec[name]
        if c.is_zero:
            continue
        out = out + Expr.from_coef(c) * b
    return _primitive_multiplier(out)


def independent_exprs(exprs) -> list:
    """Reduce a list of expressions to a linearly independent spanning set
    over the parameter field (fraction-free reduction on monomial rows)."""
    chosen: list = []   # (lead monomial, expr rows {mono: Poly})
    out: list = []
    for e in exprs:
        if e.is_zero:
            continue
        row = _expr_row(e)
        for lead, brow in chosen:
            if lead in row:
                a = row[lead]
                b = brow[lead]
                new = {}
                for k in set(row) | set(brow):
                    v = row.get(k, POLY_ZERO) * b - brow.get(k, POLY_ZERO) * a
                    if not v.is_zero:
                        new[k] = v
                row = new
        if not row:
            continue
        lead = max(row, key=_row_mono_key)
        chosen.append((lead, row))
        out.append(_expr_from_row(row))
    out.sort(key=lambda e: (len(e.terms), e.sort_key()))
    return out


def _expr_row(e: Expr) -> dict:
    dens: dict = {}
    for _m, c in e.terms:
        for f, k in c.den:
            dens[f] = max(dens.get(f, 0), k)
    mult = COEF_ONE
    for f, k in dens.items():
        mult = mult * Coef(f ** k)
    row = {}
    for m, c in e.terms:
        cc = c * mult
        if cc.den:
            raise ExprError("internal: denominator survived clearing")
        row[m] = cc.num
    return row


def _row_mono_key(m):
    from .expr import _mono_key
    return _mono_key(m)


def _expr_from_row(row: dict) -> Expr:
    return _primitive_multiplier(
        Expr({m: Coef(p) for m, p in row.items()}))


def _primitive_multiplier(e: Expr) -> Expr:
    if e.is_zero:
        return e
    num = 0
    den = 1
    sign = 1
    for _m, c in e.terms:
        if c.den:
            return e
        cc = c.num.content()
        num = _gcd_int(num, abs(cc.numerator))
        den = _lcm_int(den, cc.denominator)
    lead = e.terms[-1][1]
    if not lead.den and lead.num.leading()[1] < 0:
        sign = -1
    scale = Fraction(num, den) * sign
    if scale in (0, 1):
        return e
    return Expr({m: c * (1 / scale) for m, c in e.terms})


def _prune(leaves: list, all_leaves: list) -> list:
    """Drop constrained leaves whose solution space is no larger than a
    leaf with a subset of their constraints; drop empty leaves."""
    out = []
    for leaf in leaves:
        if leaf.dimension == 0:
            continue
        redundant = False
        mine = {c.poly.terms for c in leaf.constraints}
        for other in all_leaves:
            if other is leaf:
                continue
            theirs = {c.poly.terms for c in other.constraints}
            if theirs < mine and other.dimension >= leaf.dimension:
                redundant = True
                break
            if theirs == mine and other.dimension == leaf.dimension and \
                    all_leaves.index(other) < all_leaves.index(leaf):
                redundant = True
                break
        if not redundant:
            out.append(leaf)
    # deterministic report order: by constraint strings
    out.sort(key=lambda b: tuple(str(c) for c in b.constraints))
    return out
