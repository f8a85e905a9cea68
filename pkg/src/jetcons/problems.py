"""Problem files: parsing, pipeline orchestration, expected-result diffs.

A problem file is a sectioned text format; every expression uses the
grammar of `jetcons.parser`.  See docs/problem-format.md for the EBNF.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .detsys import Branch, CaseTree, find_multipliers, independent_exprs
from .diffops import (
    ConservedCurrent, PdeSystem, PointSymmetry, commutator, euler_operator,
    invert_divergence, make_symmetry, prolong, total_derivative,
)
from .expr import (
    Coef, E_ONE, E_ZERO, ExpLin, Expr, ExprError, Poly, POLY_ONE,
    coef_to_explin, eliminate_derived, exp, is_zero_mod, ln,
)
from .model import (
    Assumption, Constraint, MultiplierAnsatz, Problem, Unsatisfiable,
)
from .parser import ParseError, SymbolTable, parse_expr
from . import reduction as red


class ProblemFileError(ExprError):
    def __init__(self, msg, line: Optional[int] = None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


# ---------------------------------------------------------------------------
# file parsing
# ---------------------------------------------------------------------------

def _read_sections(text: str) -> list:
    """Sections as (name, [(key, value, line)]): repeated names allowed;
    bare lines get key None."""
    sections = []
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = (s[1:-1].strip(), [])
            sections.append(current)
            continue
        if current is None:
            raise ProblemFileError(f"entry outside any section: {s!r}", i)
        if "=" in s:
            k, _, v = s.partition("=")
            current[1].append((k.strip(), v.strip(), i))
        else:
            current[1].append((None, s, i))
    return sections


def _section_map(sections, name: str) -> Optional[list]:
    for n, entries in sections:
        if n == name:
            return entries
    return None


def _entries_dict(entries) -> dict:
    out = {}
    for k, v, i in entries:
        if k is None:
            raise ProblemFileError("expected key = value", i)
        if k in out:
            raise ProblemFileError(f"duplicate key {k!r}", i)
        out[k] = (v, i)
    return out


@dataclass(frozen=True)
class ReductionSpec:
    kind: str
    fields: tuple                 # tuple[(key, raw string value)]

    def get(self, key: str, default=None):
        for k, v in self.fields:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class ExpectedBranch:
    constraints: tuple            # tuple[Poly]
    multipliers: tuple            # tuple[Expr]
    extends_generic: bool = False


@dataclass(frozen=True)
class ExpectedResults:
    generic: Optional[tuple]      # tuple[Expr] or None
    branches: tuple               # tuple[ExpectedBranch]
    integrals: tuple              # tuple[(constraints, psis, rank, relations)]


def load_problem(path) -> Problem:
    path = Path(path)
    text = path.read_text()
    try:
        return _parse_problem(text, path)
    except ParseError as err:
        raise ProblemFileError(f"{path.name}: {err}") from err


def _parse_problem(text: str, path: Path) -> Problem:
    sections = _read_sections(text)
    meta = _entries_dict(_section_map(sections, "problem") or [])
    name = meta.get("name", (path.stem, 0))[0]

    var_entries = _entries_dict(_section_map(sections, "variables") or [])
    if "independent" not in var_entries or "dependent" not in var_entries:
        raise ProblemFileError(
            "[variables] must declare 'independent' and 'dependent'")
    ivars = tuple(var_entries["independent"][0].split())
    deps = tuple(var_entries["dependent"][0].split())
    params = tuple(var_entries.get("parameters", ("", 0))[0].split())
    symbols = SymbolTable(ivars=ivars, deps=deps, params=params)

    # derived parameters: name = rational function of the others
    derived = []
    der_entries = _section_map(sections, "derived") or []
    der_names = []
    for k, v, i in der_entries:
        if k is None:
            raise ProblemFileError("derived entries need name = value", i)
        der_names.append(k)
    symbols_full = symbols.with_extra(params=tuple(der_names))
    for k, v, i in der_entries:
        e = parse_expr(v, symbols_full)
        if not e.is_constant:
            raise ProblemFileError(
                f"derived parameter {k} must be a function of parameters", i)
        derived.append((k, e.const_coef()))

    assumptions = []
    for k, v, i in (_section_map(sections, "assume") or []):
        s = v if k is None else f"{k}={v}"
        rel = None
        if "!=" in s:
            lhs, _, rhs = s.partition("!=")
            rel = "nonzero"
        elif ">" in s:
            lhs, _, rhs = s.partition(">")
            rel = "positive"
        else:
            raise ProblemFileError(
                f"assumption must use '!= 0' or '> 0': {s!r}", i)
        if rhs.strip() != "0":
            raise ProblemFileError(
                f"assumption right-hand side must be 0: {s!r}", i)
        e = parse_expr(lhs.strip(), symbols_full)
        c = e.const_coef()
        if c.den:
            raise ProblemFileError(
                f"assumption must be polynomial in parameters: {s!r}", i)
        assumptions.append(Assumption(c.num, rel))

    # PDE
    pde_entries = _section_map(sections, "pde")
    if not pde_entries:
        raise ProblemFileError("missing [pde] section")
    equations = []
    seen_leads = set()
    for k, v, i in pde_entries:
        if k is None:
            raise ProblemFileError("pde entries are 'lead = rhs'", i)
        lead = parse_expr(k, symbols_full)
        jets = list(lead.jets())
        if len(lead.terms) != 1 or len(jets) != 1:
            raise ProblemFileError(
                f"left side must be a single jet coordinate: {k!r}", i)
        b = jets[0]
        if b in seen_leads:
            raise ProblemFileError(f"leading derivative repeated: {k!r}", i)
        seen_leads.add(b)
        rhs = parse_expr(v, symbols_full)
        equations.append(((b[1], b[2]), rhs))
    system = PdeSystem(ivars, deps, tuple(equations))

    # symmetries
    algebra = []
    for k, v, i in (_section_map(sections, "symmetries") or []):
        if k is None:
            raise ProblemFileError("symmetry entries are 'name = ...'", i)
        xi = {}
        eta = {}
        for part in v.split(";"):
            part = part.strip()
            if not part:
                continue
            var, _, expr_s = part.partition(":")
            var = var.strip()
            e = parse_expr(expr_s.strip(), symbols_full)
            if var in ivars:
                xi[var] = e
            elif var in deps:
                eta[var] = e
            else:
                raise ProblemFileError(
                    f"unknown symmetry component {var!r}", i)
        algebra.append(make_symmetry(k, xi, eta))
    algebra = _attach_structure_shifts(tuple(algebra), ivars, deps)

    # ansatz
    ans_entries = _entries_dict(_section_map(sections, "ansatz") or [])
    basis = []
    if "basis" in ans_entries:
        for part in ans_entries["basis"][0].split(";"):
            part = part.strip()
            if part:
                basis.append(parse_expr(part, symbols_full))
    max_order = int(ans_entries.get("max_jet_order", ("0", 0))[0])
    if not basis and "degree" in ans_entries:
        degree = int(ans_entries["degree"][0])
        ivar_degree = int(ans_entries.get("ivar_degree", ("0", 0))[0])
        basis = generate_basis(system, degree, max_order, ivar_degree)
    dedup = []
    for b in basis:
        if not any(b == s for s in dedup):
            dedup.append(b)
    ansatz = MultiplierAnsatz(tuple(dedup), max_order)

    # reduction
    rspec = None
    rsec = _section_map(sections, "reduction")
    if rsec is not None:
        entries = _entries_dict(rsec)
        kind = entries.get("kind", (None, 0))[0]
        if kind is None:
            raise ProblemFileError("[reduction] needs kind = ...")
        rspec = ReductionSpec(kind=kind, fields=tuple(
            (k, v) for k, (v, _i) in entries.items() if k != "kind"))

    expected = _parse_expected(sections, symbols_full, ivars, deps)

    return Problem(
        name=name, ivars=ivars, deps=deps, params=params, system=system,
        algebra=algebra, ansatz=ansatz, assumptions=tuple(assumptions),
        derived=tuple(derived), reduction=rspec, expected=expected)


def generate_basis(system: PdeSystem, degree: int, max_order: int,
                   ivar_degree: int) -> list:
    """All monomials of total degree <= degree in the jets of order <=
    max_order, times monomials of degree <= ivar_degree in the variables."""
    import itertools
    gens = []
    for dep in system.deps:
        pool = [()]
        for _ in range(max_order):
            pool = [midx for m in pool
                    for midx in {tuple(sorted(_madd(m, v)))
                                 for v in system.ivars}] + pool
        seen = set()
        for m in pool:
            key = tuple(sorted(m))
            if key in seen:
                continue
            seen.add(key)
            if system.principal_rule(("j", dep, key)):
                continue
            gens.append(Expr.jet(dep, key))
    out = [Expr.number(1)]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(gens, d):
            e = E_ONE
            for g in combo:
                e = e * g
            out.append(e)
    ivms = [Expr.number(1)]
    for d in range(1, ivar_degree + 1):
        for combo in itertools.combinations_with_replacement(
                [Expr.var(v) for v in system.ivars], d):
            e = E_ONE
            for g in combo:
                e = e * g
            ivms.append(e)
    full = []
    for b in out:
        for m in ivms:
            full.append(b * m)
    return full


def _madd(m: tuple, v: str) -> tuple:
    d = dict(m)
    d[v] = d.get(v, 0) + 1
    return tuple(sorted(d.items()))


def _attach_structure_shifts(algebra: tuple, ivars, deps) -> tuple:
    """For a solvable pair [X1, X2] = C X1 (C != 0), the invariance
    condition of the second generator carries the extra term C*Q."""
    if len(algebra) != 2:
        return algebra
    X1, X2 = algebra
    com = commutator(X1, X2, ivars, deps)
    try:
        C = red._proportionality(com, X1, ivars, deps[0])
    except ExprError:
        return algebra
    if C.is_zero:
        return algebra
    return (X1, PointSymmetry(X2.name, X2.xi, X2.eta, Expr.from_coef(C)))


def _parse_expected(sections, symbols, ivars, deps) -> Optional[ExpectedResults]:
    gen = None
    branches = []
    integrals = []
    found = False
    red_syms = symbols.with_extra(
        ivars=("zeta", "rho", "chi", "r"),
        deps=tuple(d.upper() for d in deps if d.upper() != d))
    for sname, entries in sections:
        if sname == "expected":
            found = True
            d = _entries_dict(entries)
            if "generic" in d:
                gen = tuple(_parse_list(d["generic"][0], symbols))
        elif sname == "expected.branch":
            found = True
            d = _entries_dict(entries)
            cons = tuple(_parse_constraints(d.get("constraints", ("", 0))[0],
                                            symbols))
            mults = tuple(_parse_list(d.get("multipliers", ("", 0))[0],
                                      symbols))
            ext = d.get("extends_generic", ("false", 0))[0].lower() == "true"
            branches.append(ExpectedBranch(cons, mults, ext))
        elif sname == "expected.integrals":
            found = True
            d = _entries_dict(entries)
            cons = tuple(_parse_constraints(d.get("constraints", ("", 0))[0],
                                            symbols))
            psi_syms = red_syms.with_extra(params=tuple(
                f"PSI{i}" for i in range(1, 10)))
            psis = tuple(_parse_list(d.get("psis", ("", 0))[0], red_syms))
            rank = d.get("rank")
            rank = int(rank[0]) if rank else None
            rels = tuple(_parse_list(d.get("relations", ("", 0))[0],
                                     psi_syms))
            integrals.append((cons, psis, rank, rels))
    if not found:
        return None
    return ExpectedResults(generic=gen, branches=tuple(branches),
                           integrals=tuple(integrals))


def _parse_list(s: str, symbols) -> list:
    out = []
    for part in s.split(";"):
        part = part.strip()
        if part:
            out.append(parse_expr(part, symbols))
    return out


def _parse_constraints(s: str, symbols) -> list:
    out = []
    for part in s.split(";"):
        part = part.strip()
        if not part:
            continue
        e = parse_expr(part, symbols)
        c = e.const_coef()
        if c.den:
            raise ProblemFileError(f"constraint must be polynomial: {part}")
        out.append(c.num.primitive()[1])
    return out


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class IntegralRecord:
    multiplier: Expr
    reduced_multiplier: Expr           # after any radial restriction
    current: ConservedCurrent          # variables of the reduced system
    transformed: ConservedCurrent      # canonical variables
    psi: Expr
    psi_multiplier_route: Expr
    routes_agree: bool
    conservation_exact: bool           # div(current) == Q*G identically
    lam: Expr
    trivial: bool
    constant_name: str


@dataclass
class BranchResult:
    branch: Branch
    reduced: Optional[red.ReducedODE]
    rmap: Optional[red.ReductionMap]
    integrals: list
    rank: Optional[int]
    relations: list
    errors: list


@dataclass
class ResultBundle:
    problem: Problem
    tree: CaseTree
    branches: list                     # list[BranchResult]


def resolve_rational_derived(problem: Problem) -> tuple:
    """Substitute derived parameters whose value has become a rational
    constant (after branch specialization) everywhere, exponents included.
    Returns (problem, substituted values)."""
    values = {}
    keep = []
    for n, v in problem.derived:
        if v.is_const:
            values[n] = v.const_value()
        else:
            keep.append((n, v))
    if not values:
        return problem, values
    def sub(e: Expr) -> Expr:
        return e.subs_params(values)
    system = PdeSystem(
        problem.system.ivars, problem.system.deps,
        tuple(((d, m), sub(rhs)) for (d, m), rhs in problem.system.equations))
    algebra = tuple(
        PointSymmetry(X.name,
                      tuple((v, sub(e)) for v, e in X.xi),
                      tuple((d, sub(e)) for d, e in X.eta),
                      sub(X.invariance_shift))
        for X in problem.algebra)
    basis = []
    for b in problem.ansatz.basis:
        nb = sub(b)
        if not nb.is_zero and not any(nb == s for s in basis):
            basis.append(nb)
    new = replace(problem, system=system, algebra=algebra,
                  ansatz=MultiplierAnsatz(tuple(basis),
                                          problem.ansatz.max_jet_order),
                  derived=tuple(keep))
    return new, values


def build_reduction_map(problem: Problem,
                        resolution: tuple = ()) -> Optional[tuple]:
    """Construct the branch's reduction map from the [reduction] spec.
    Returns (map, system-for-reduction, multiplier transform) or None."""
    spec = problem.reduction
    if spec is None:
        return None
    values = dict(resolution)
    eliminated = tuple(n for n in values if n not in problem.params)
    symbols = SymbolTable(
        ivars=problem.ivars, deps=problem.deps,
        params=tuple(problem.params) + tuple(n for n, _ in problem.derived)
        + eliminated)

    def parse_here(s, extra_ivars=(), extra_deps=()):
        st = symbols.with_extra(ivars=extra_ivars, deps=extra_deps)
        e = parse_expr(s, st)
        if values:
            e = e.subs_params(values)
        return e

    sys0 = problem.system
    qxform = lambda Q: Q
    gens = _reduction_generators(problem)
    if spec.kind == "translation":
        gen = _pick_generator(problem, spec, 0)
        t, x = problem.ivars
        xi = gen.xi_map()
        c = xi.get(x, E_ZERO) / xi.get(t, E_ZERO)
        rmap = red.translation_map(problem.ivars, problem.deps[0], c)
    elif spec.kind == "scaling":
        gen = _pick_generator(problem, spec, 0)
        rmap = red.scaling_map(problem.ivars, problem.deps[0], gen)
    elif spec.kind == "two-translations":
        zeta_def = parse_here(spec.get("zeta"))
        rmap = red.two_translations_map(
            problem.ivars, problem.deps[0], zeta_def, problem.algebra)
    elif spec.kind == "translation-scaling":
        zeta_def = parse_here(spec.get("zeta"))
        newdep = problem.deps[0].upper()
        dep_subst = parse_here(spec.get("u"), extra_ivars=("zeta",),
                               extra_deps=(newdep,))
        rmap = red.translation_scaling_map(
            problem.ivars, problem.deps[0], zeta_def, dep_subst,
            problem.algebra)
    elif spec.kind == "radial":
        spatial = tuple(spec.get("spatial").split())
        radial = spec.get("radius", "r")
        sys0 = red.radialize(problem.system, spatial, radial)
        newdep = problem.deps[0].upper()
        others = tuple(v for v in problem.ivars if v not in spatial)
        st_extra = dict(extra_ivars=(radial, "zeta", "rho"),
                        extra_deps=(newdep,))
        fw = []
        for nv in ("zeta", "rho"):
            fw.append((nv, parse_here(spec.get(nv), (radial, "zeta", "rho"),
                                      (newdep,))))
        inverse = []
        for ov in others + (radial,):
            s = spec.get(f"inverse.{ov}")
            if s is None:
                raise ProblemFileError(
                    f"radial reduction needs inverse.{ov}")
            inverse.append((ov, parse_here(s, (radial, "zeta", "rho"),
                                           (newdep,))))
        dep_subst = parse_here(spec.get("u"), (radial, "zeta", "rho"),
                               (newdep,))
        rmap = red.ReductionMap(
            old_ivars=others + (radial,), new_ivars=("zeta", "rho"),
            old_dep=problem.deps[0], new_dep=newdep,
            forward=tuple(fw), inverse=tuple(inverse),
            dep_subst=dep_subst, kind="radial")
        qxform = lambda Q: red.radial_multiplier(Q, spatial, radial)
        # radial restriction of the scaling generator drives the checks
        scaling_name = spec.get("scaling")
        scal = None
        for X in problem.algebra:
            if (scaling_name and X.name == scaling_name) or \
                    (not scaling_name and
                     not X.xi_map().get(others[0], E_ZERO).is_zero):
                scal = X
        if scal is not None:
            xi_r = {others[0]: scal.xi_map().get(others[0], E_ZERO)}
            w = scal.xi_map().get(spatial[0], E_ZERO) / Expr.var(spatial[0])
            xi_r[radial] = Expr.from_coef(w.const_coef()) * Expr.var(radial)
            gens = [make_symmetry(scal.name, xi_r, scal.eta_map())]
        else:
            gens = []
    elif spec.kind == "user":
        new_names = tuple(spec.get("new", "zeta rho").split())
        newdep = problem.deps[0].upper()
        fw = []
        for nv in new_names:
            fw.append((nv, parse_here(spec.get(nv), new_names, (newdep,))))
        inverse = []
        for ov in problem.ivars:
            s = spec.get(f"inverse.{ov}")
            if s is None:
                raise ProblemFileError(f"user reduction needs inverse.{ov}")
            inverse.append((ov, parse_here(s, new_names, (newdep,))))
        dep_subst = parse_here(spec.get("u"), new_names, (newdep,))
        rmap = red.ReductionMap(
            old_ivars=problem.ivars, new_ivars=new_names,
            old_dep=problem.deps[0], new_dep=newdep,
            forward=tuple(fw), inverse=tuple(inverse),
            dep_subst=dep_subst, kind="user")
    else:
        raise ProblemFileError(f"unknown reduction kind {spec.kind!r}")
    return rmap, sys0, qxform, gens


def _pick_generator(problem: Problem, spec: ReductionSpec,
                    default_index: int) -> PointSymmetry:
    name = spec.get("generator")
    if name is None:
        return problem.algebra[default_index]
    for X in problem.algebra:
        if X.name == name:
            return X
    raise ProblemFileError(f"unknown generator {name!r}")


def run_problem(problem: Problem, branch_depth: int = 3,
                reduce_branches: bool = True) -> ResultBundle:
    tree = find_multipliers(problem, branch_depth)
    results = []
    for branch in tree.all_branches():
        results.append(_run_branch(problem, branch,
                                   reduce_branches and branch.multipliers))
    return ResultBundle(problem=problem, tree=tree, branches=results)


def _run_branch(problem: Problem, branch: Branch, do_reduce) -> BranchResult:
    out = BranchResult(branch=branch, reduced=None, rmap=None, integrals=[],
                       rank=None, relations=[], errors=[])
    if not do_reduce or problem.reduction is None:
        return out
    bp, resolved = resolve_rational_derived(branch.problem)
    derived = bp.derived_map()
    resolution = branch.resolution + tuple(
        (n, Coef.const(v)) for n, v in sorted(resolved.items()))
    try:
        built = build_reduction_map(bp, resolution)
        if built is None:
            return out
        rmap, sys0, qxform, gens = built
        if gens:
            red._check_conditions(rmap, gens, derived)
        ode = red.reduce_pde(sys0, rmap, derived)
        out.rmap = rmap
        out.reduced = ode
    except ExprError as err:
        out.errors.append(str(err))
        return out
    psis = []
    for i, Q in enumerate(branch.multipliers, start=1):
        try:
            Qb = Q.subs_params(dict(
                (n, v.const_value()) for n, v in branch.problem.derived
                if v.is_const))
            Qr = qxform(Qb)
            cur = invert_divergence(Qr * sys0.g_expr(0),
                                    sys0.ivars, sys0.deps)
            exact = (cur.divergence() - Qr * sys0.g_expr(0)).is_zero
            curn = red.transform_current(cur, rmap, derived)
            fi = red.extract_first_integral(
                curn, rmap, ode, f"C{i}", derived, multiplier=Q)
            fi2 = red.first_integral_from_multiplier(
                Qr, rmap, ode, f"C{i}", derived)
            agree = red.psis_equivalent(fi.psi, fi2.psi, ode, derived)
            lam = red.verify_first_integral(fi, ode, derived)
            trivial = total_derivative(fi.psi, ode.zeta).is_zero
            out.integrals.append(IntegralRecord(
                multiplier=Q, reduced_multiplier=Qr, current=cur,
                transformed=curn, psi=fi.psi,
                psi_multiplier_route=fi2.psi, routes_agree=agree,
                conservation_exact=exact, lam=lam,
                trivial=trivial, constant_name=f"C{i}"))
            psis.append(fi.psi)
        except ExprError as err:
            out.errors.append(f"multiplier {Q}: {err}")
    if psis:
        nontrivial = [p for p in psis]
        rank, rels = red.functional_independence(
            nontrivial, out.reduced, derived)
        out.rank = rank
        out.relations = _minimal_relations(rels)
    return out


def _reduction_generators(problem: Problem):
    """Generators whose canonical conditions the map must satisfy (the
    shift-free verification uses the translation first)."""
    spec = problem.reduction
    if spec and spec.kind == "radial":
        return []
    if spec and spec.get("generators"):
        names = spec.get("generators").split()
        return [X for X in problem.algebra if X.name in names]
    if spec and spec.kind in ("translation", "scaling"):
        return [_pick_generator(problem, spec, 0)]
    return list(problem.algebra[:2])


def _minimal_relations(rels: list) -> list:
    """Drop degree-two consequences of linear dependencies."""
    linear_support = set()
    keep = []
    for rel in rels:
        labels = [lab for lab, _c in rel]
        if all("*" not in lab and "^" not in lab for lab in labels):
            keep.append(rel)
            for lab in labels:
                if lab != "1":
                    linear_support.add(lab)
    for rel in rels:
        labels = [lab for lab, _c in rel]
        if all("*" not in lab and "^" not in lab for lab in labels):
            continue
        mentions = set()
        for lab in labels:
            for piece in lab.replace("^2", "").split("*"):
                if piece and piece != "1":
                    mentions.add(piece)
        if mentions & linear_support:
            continue
        keep.append(rel)
    return keep


# ---------------------------------------------------------------------------
# expected-results matching
# ---------------------------------------------------------------------------

@dataclass
class DiffItem:
    name: str
    ok: bool
    detail: str = ""


def diff_expected(bundle: ResultBundle) -> list:
    """Compare a result bundle against the problem's expected results;
    returns a list of DiffItem."""
    expected = bundle.problem.expected
    out = []
    if expected is None:
        return [DiffItem("expected", True, "no expected results declared")]
    if expected.generic is not None:
        ok, detail = _match_span(expected.generic,
                                 bundle.tree.generic.multipliers)
        out.append(DiffItem("generic multipliers", ok, detail))
    for eb in expected.branches:
        br = _find_branch(bundle, eb.constraints)
        if br is None:
            out.append(DiffItem(
                f"branch {_cons_str(eb.constraints)}", False,
                "no matching branch"))
            continue
        want = list(eb.multipliers)
        if eb.extends_generic and expected.generic:
            want = list(expected.generic) + want
        ok, detail = _match_span(want, br.branch.multipliers,
                                 resolution=br.branch.resolution)
        out.append(DiffItem(f"branch {_cons_str(eb.constraints)}", ok,
                            detail))
    for cons, psis, rank, rels in expected.integrals:
        br = _find_branch(bundle, cons)
        if br is None or br.reduced is None:
            out.append(DiffItem(f"integrals {_cons_str(cons)}", False,
                                "no reduced branch"))
            continue
        derived = br.branch.problem.derived_map()
        got = [rec.psi for rec in br.integrals]
        detail = []
        ok = True
        for i, want in enumerate(psis, 1):
            match = any(red.psis_equivalent(want, g, br.reduced, derived)
                        for g in got)
            if not match:
                ok = False
                detail.append(f"PSI{i} not reproduced")
        if rank is not None and br.rank != rank:
            ok = False
            detail.append(f"rank {br.rank} != expected {rank}")
        for rel in rels:
            if not _relation_holds(rel, psis, br, derived):
                ok = False
                detail.append(f"relation fails: {rel}")
        out.append(DiffItem(f"integrals {_cons_str(cons)}", ok,
                            "; ".join(detail)))
    return out


def _relation_holds(rel: Expr, psis, br, derived) -> bool:
    """Substitute the expected psi expressions into a relation written in
    the parameters PSI1..PSIn."""
    values = {}
    for i, p in enumerate(psis, 1):
        values[f"PSI{i}"] = p
    e = _subs_psi_params(rel, values)
    return is_zero_mod(e, derived)


def _subs_psi_params(e: Expr, values: dict) -> Expr:
    """Replace parameter occurrences (PSI names) by expressions."""
    out = E_ZERO
    for m, c in e.terms:
        term = Expr({m: Coef(POLY_ONE)})
        # expand the coefficient num/den over the PSI parameters
        num = E_ZERO
        for pm, k in c.num.terms:
            t = Expr.number(k)
            for nme, ee in pm:
                if nme in values:
                    t = t * values[nme] ** ee
                else:
                    t = t * Expr.param(nme) ** ee
            num = num + t
        if c.den:
            for f, kk in c.den:
                if f.params() & set(values):
                    raise ExprError("PSI name in a denominator")
            den = Coef(POLY_ONE, c.den)
            num = num * Expr.from_coef(den)
        out = out + num * term
    return out


def _cons_str(cons) -> str:
    return "{" + ", ".join(f"{p} = 0" for p in cons) + "}" if cons \
        else "{generic}"


def _find_branch(bundle: ResultBundle, cons: tuple):
    """Branch whose constraint set matches the given polynomials
    semantically (each implies the other under the branch resolution)."""
    want = {p.terms for p in cons}
    if not want:
        for br in bundle.branches:
            if not br.branch.constraints:
                return br
        return None
    for br in bundle.branches:
        have = {c.poly.terms for c in br.branch.constraints}
        if have == want:
            return br
    # semantic fallback: every wanted poly vanishes under the branch's
    # resolution and the counts agree
    for br in bundle.branches:
        if len(br.branch.constraints) != len(want):
            continue
        values = dict(br.branch.resolution)
        okall = True
        for p in cons:
            e = Expr.from_coef(Coef(p)).subs_params(values)
            if not br.branch.problem.is_zero_mod(e):
                okall = False
                break
        if okall:
            return br
    return None


def _match_span(want, got, resolution: tuple = ()) -> tuple:
    """Spans agree over the parameter field (after applying the branch
    resolution to the wanted expressions)."""
    values = dict(resolution)
    want2 = []
    for w in want:
        e = w.subs_params(values) if values else w
        if not e.is_zero:
            want2.append(e)
    got = list(got)
    all_ind = independent_exprs(want2 + got)
    want_ind = independent_exprs(want2)
    got_ind = independent_exprs(got)
    if len(want_ind) != len(got_ind):
        return False, (f"dimension mismatch: expected {len(want_ind)}, "
                       f"got {len(got_ind)}")
    if len(all_ind) != len(got_ind):
        return False, "spans differ"
    return True, ""


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def bundle_to_json(bundle: ResultBundle) -> dict:
    prob = bundle.problem
    out = {
        "problem": prob.name,
        "independent": list(prob.ivars),
        "dependent": list(prob.deps),
        "parameters": list(prob.params),
        "derived": {n: str(Expr.from_coef(v)) for n, v in prob.derived},
        "pde": {str(Expr.jet(d, m)): str(rhs)
                for (d, m), rhs in prob.system.equations},
        "branches": [],
    }
    for br in bundle.branches:
        b = br.branch
        rec = {
            "constraints": [str(c.poly) + " = 0" for c in b.constraints],
            "nonzero": [str(p) for p in b.nonzeros],
            "multipliers": [str(m) for m in b.multipliers],
            "parameters": list(b.problem.params),
            "derived": {n: str(Expr.from_coef(v))
                        for n, v in b.problem.derived},
            "pde": {str(Expr.jet(d, m)): str(rhs)
                    for (d, m), rhs in b.problem.system.equations},
            "errors": br.errors,
        }
        if br.reduced is not None:
            rec["reduced_ode"] = str(br.reduced.expr)
            rec["weight"] = str(br.reduced.weight)
            rec["zeta"] = br.reduced.zeta
            rec["reduced_dep"] = br.reduced.dep
            rec["reduced_pde"] = {}
            bp2, resolved2 = resolve_rational_derived(b.problem)
            built = build_reduction_map(
                bp2, b.resolution + tuple(
                    (n, Coef.const(v)) for n, v in sorted(resolved2.items())))
            if built is not None:
                _rmap, sys0, _qx, _gens = built
                rec["reduced_pde"] = {
                    str(Expr.jet(d, m)): str(rhs)
                    for (d, m), rhs in sys0.equations}
                rec["reduced_ivars"] = list(sys0.ivars)
            rec["map"] = {
                "kind": br.rmap.kind,
                "forward": {n: str(e) for n, e in br.rmap.forward},
                "inverse": {n: str(e) for n, e in br.rmap.inverse},
                "dep_subst": str(br.rmap.dep_subst),
            }
            rec["integrals"] = []
            for ir in br.integrals:
                rec["integrals"].append({
                    "multiplier": str(ir.multiplier),
                    "reduced_multiplier": str(ir.reduced_multiplier),
                    "current": {v: str(e) for v, e in ir.current.components},
                    "transformed": {v: str(e)
                                    for v, e in ir.transformed.components},
                    "psi": str(ir.psi),
                    "psi_multiplier_route": str(ir.psi_multiplier_route),
                    "routes_agree": ir.routes_agree,
                    "lambda": str(ir.lam),
                    "trivial": ir.trivial,
                    "constant": ir.constant_name,
                })
            if br.rank is not None:
                rec["rank"] = br.rank
                rec["relations"] = [
                    " + ".join(f"({c})*{lab}" for lab, c in rel) + " = 0"
                    for rel in br.relations]
        out["branches"].append(rec)
    return out
