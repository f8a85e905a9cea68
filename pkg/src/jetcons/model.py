"""Problem model: PDE system, symmetry algebra, parameter assumptions,
derived parameters, and specialization under classification constraints."""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .diffops import PdeSystem, PointSymmetry, make_symmetry
from .expr import (
    Coef, Expr, ExprError, Poly, POLY_ONE, coef_to_explin, eliminate_derived,
)


class Unsatisfiable(ExprError):
    """A constraint contradicts the declared parameter assumptions."""


@dataclass(frozen=True)
class Assumption:
    """Declared restriction on the parameters: poly != 0 or poly > 0."""
    poly: Poly
    relation: str  # "nonzero" | "positive"

    def __str__(self):
        op = "!=" if self.relation == "nonzero" else ">"
        return f"{self.poly} {op} 0"


@dataclass(frozen=True)
class Constraint:
    """Classification condition poly == 0, stored in primitive form."""
    poly: Poly

    def __str__(self):
        return f"{self.poly} = 0"


@dataclass(frozen=True)
class MultiplierAnsatz:
    basis: tuple            # tuple[Expr], normalized, pairwise distinct
    max_jet_order: int = 0

    def __post_init__(self):
        seen = []
        for b in self.basis:
            if any(b == s for s in seen):
                raise ExprError(f"ansatz basis entry repeated: {b}")
            seen.append(b)


@dataclass(frozen=True)
class Problem:
    name: str
    ivars: tuple
    deps: tuple
    params: tuple
    system: PdeSystem
    algebra: tuple                 # tuple[PointSymmetry]
    ansatz: MultiplierAnsatz
    assumptions: tuple = ()        # tuple[Assumption]
    derived: tuple = ()            # tuple[(name, Coef)] in dependency order
    reduction: Optional[object] = None   # ReductionSpec, set by loader
    expected: Optional[object] = None

    def derived_map(self) -> dict:
        return dict(self.derived)

    def eliminate(self, e: Expr) -> Expr:
        return eliminate_derived(e, self.derived_map())

    def is_zero_mod(self, e: Expr) -> bool:
        if e.is_zero:
            return True
        return self.eliminate(e).is_zero

    def all_params(self) -> set:
        return set(self.params) | {n for n, _ in self.derived}


def _subs_symmetry(X: PointSymmetry, values: dict) -> PointSymmetry:
    return PointSymmetry(
        X.name,
        tuple((v, e.subs_params(values)) for v, e in X.xi),
        tuple((d, e.subs_params(values)) for d, e in X.eta),
        X.invariance_shift.subs_params(values),
    )


def specialize(problem: Problem, con: Poly):
    """Apply the affine constraint `con == 0` by eliminating one parameter.
    Prefers a parameter that does not occur in any exponent, so general
    rational-function solutions stay representable.  Returns
    (problem, eliminated name, value)."""
    sol = solve_affine(con, problem)
    if sol is None:
        raise Unsatisfiable(f"cannot solve constraint {con} affinely")
    name, value = sol
    values = {name: value}
    new_eqs = []
    for (lead, midx), rhs in problem.system.equations:
        new_eqs.append(((lead, midx), rhs.subs_params(values)))
    system = PdeSystem(problem.system.ivars, problem.system.deps,
                       tuple(new_eqs))
    algebra = tuple(_subs_symmetry(X, values) for X in problem.algebra)
    basis = []
    for b in problem.ansatz.basis:
        nb = b.subs_params(values)
        if nb.is_zero:
            continue
        if not any(nb == s for s in basis):
            basis.append(nb)
    ansatz = MultiplierAnsatz(tuple(basis), problem.ansatz.max_jet_order)
    assumptions = []
    for a in problem.assumptions:
        p = a.poly.subs(_poly_values(values))
        if p.is_const:
            v = p.const_value()
            ok = (v != 0) if a.relation == "nonzero" else (v > 0)
            if not ok:
                raise Unsatisfiable(
                    f"constraint {con} = 0 violates assumption {a}")
            continue
        # divide by the (positive) content only: sign matters for positivity
        assumptions.append(Assumption(p * (1 / p.content()), a.relation))
    derived = []
    for n, cval in problem.derived:
        from .expr import _coef_subs_coef
        derived.append((n, _coef_subs_coef(cval, values)))
    params = tuple(p for p in problem.params if p != name)
    new = replace(problem, params=params, system=system, algebra=algebra,
                  ansatz=ansatz, assumptions=tuple(assumptions),
                  derived=tuple(derived))
    return new, name, value


def _poly_values(values: dict) -> dict:
    out = {}
    for n, v in values.items():
        if isinstance(v, str):
            out[n] = Poly.var(v)
        elif isinstance(v, Coef):
            if v.den:
                raise ExprError("assumption substitution needs a polynomial")
            out[n] = v.num
        else:
            out[n] = v
    return out


def exponent_params(problem: Problem) -> set:
    """Parameters appearing inside any power exponent of the problem data."""
    out: set = set()

    def scan(e: Expr):
        for m, _c in e.terms:
            for b, ee in m:
                out.update(ee.params())
                if b[0] in ("p", "e", "l"):
                    scan(b[1])

    for (_l, _m), rhs in problem.system.equations:
        scan(rhs)
    for X in problem.algebra:
        for _v, e in X.xi:
            scan(e)
        for _d, e in X.eta:
            scan(e)
    for b in problem.ansatz.basis:
        scan(b)
    return out


def solve_affine(con: Poly, problem: Problem):
    """Solve an affine-in-one-parameter constraint for a parameter,
    returning (name, value) where value is a Fraction, a parameter name
    (rename), or a Coef.  Parameters living in exponents only admit
    rational or rename values."""
    in_exponents = exponent_params(problem)
    candidates = []
    for name in sorted(con.params()):
        if con.degree_in(name) != 1:
            continue
        cs = con.coeffs_in(name)
        lead = cs.get(1, Poly({}))
        rest = cs.get(0, Poly({}))
        if lead.is_zero:
            continue
        if lead.is_const:
            value_coef = Coef(-rest) / Coef(lead)
            candidates.append((name, value_coef))
    if not candidates:
        return None

    def value_kind(nv):
        name, v = nv
        if v.is_const:
            return (0, name)
        if not v.den and len(v.num.terms) == 1 and \
                v.num.terms[0][1] in (1, -1) and \
                len(v.num.terms[0][0]) == 1 and v.num.terms[0][0][0][1] == 1:
            return (1, name)  # rename to another parameter
        return (2, name)

    candidates.sort(key=value_kind)
    for name, v in candidates:
        if name in in_exponents:
            if v.is_const:
                return name, v.const_value()
            kind = value_kind((name, v))[0]
            if kind == 1:
                # +/- other parameter: rename only for +1 coefficient
                mono, k = v.num.terms[0]
                if k == 1:
                    return name, mono[0][0]
                return name, v
            continue
        if v.is_const:
            return name, v.const_value()
        if value_kind((name, v))[0] == 1:
            mono, k = v.num.terms[0]
            if k == 1:
                return name, mono[0][0]
        return name, v
    return None


def rng_from_env(salt: int = 0) -> random.Random:
    seed = os.environ.get("REDUCE_SEED", "20200531")
    return random.Random(f"{seed}:{salt}")


def satisfiable(con: Poly, problem: Problem, tries: int = 200) -> bool:
    """Search for a rational witness of con == 0 meeting the declared
    assumptions (affine solve for one parameter, random values for the
    rest)."""
    sol = solve_affine(con, problem)
    if sol is None:
        # try a pure random search including con == 0 check
        return False
    name, value = sol
    rng = rng_from_env(hash(str(con)) & 0xFFFF)
    others = [p for p in sorted(problem.all_params()) if p != name]
    for _ in range(tries):
        point = {p: Fraction(rng.randint(1, 12), rng.randint(1, 4)) *
                 rng.choice((1, -1)) for p in others}
        try:
            if isinstance(value, str):
                point[name] = point.get(value, Fraction(1))
            elif isinstance(value, Coef):
                point[name] = value.eval(point)
            else:
                point[name] = Fraction(value)
            # derived parameters receive their defining values
            for dn, dv in problem.derived:
                point[dn] = dv.eval(point)
        except (ZeroDivisionError, ExprError):
            continue
        ok = True
        for a in problem.assumptions:
            try:
                v = a.poly.eval(point)
            except ExprError:
                ok = False
                break
            if a.relation == "nonzero" and v == 0:
                ok = False
                break
            if a.relation == "positive" and v <= 0:
                ok = False
                break
        if ok:
            return True
    return False
