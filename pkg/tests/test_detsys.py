import random
from fractions import Fraction as F

import pytest

from jetcons.detsys import (
    AnsatzDependsOnLeading, build_determining_system, find_multipliers,
    independent_exprs, solve_determining, _eliminate, _null_space,
)
from jetcons.diffops import (
    PdeSystem, euler_operator, make_symmetry, prolong, total_derivative,
)
from jetcons.expr import Coef, ExpLin, Expr, Poly, POLY_ZERO, eval_numeric
from jetcons.model import Assumption, MultiplierAnsatz, Problem, rng_from_env

u = Expr.jet("u")
ux = Expr.jet("u", (("x", 1),))
uxx = Expr.jet("u", (("x", 2),))
x, t = Expr.var("x"), Expr.var("t")
a, b, c = (Expr.param(n) for n in "abc")
p, q = ExpLin.param("p"), ExpLin.param("q")


def D(e, v, n=1):
    for _ in range(n):
        e = total_derivative(e, v)
    return e


def compacton_problem():
    rhs = -D(a * u.pow(p), "x") - D(b * u.pow(q), "x", 3)
    sys = PdeSystem(("t", "x"), ("u",), ((("u", (("t", 1),)), rhs),))
    X = make_symmetry("X1", {"t": Expr.number(1), "x": c},
                      {"u": Expr.number(0)})
    basis = (Expr.number(1), u, u.pow(p), u.pow(q), x - c * t,
             (x - c * t) ** 2, x, t, ux, uxx)
    asm = tuple(Assumption(Poly.var(n), "positive") for n in ("p", "q")) + \
        tuple(Assumption(Poly.var(n), "nonzero") for n in ("a", "b", "c"))
    return Problem("compacton", ("t", "x"), ("u",), ("a", "b", "c", "p", "q"),
                   sys, (X,), MultiplierAnsatz(basis), asm)


def test_compacton_classification():
    tree = find_multipliers(compacton_problem(), 3)
    gen = {str(m) for m in tree.generic.multipliers}
    assert gen == {"1", "u^(q)"}
    special = None
    for br in tree.branches:
        cons = {str(cc.poly) for cc in br.constraints}
        if cons == {"p - 1", "c - a"}:
            special = br
    assert special is not None
    got = {str(m) for m in special.multipliers}
    assert got == {"1", "u^(q)", "x - c*t", "x^2 + c^2*t^2 - 2*c*t*x"}


def test_zero_symmetry_list_reduces_to_euler_condition():
    # linear PDE, no symmetries: system is E_u(QG) = 0 alone
    rhs = uxx
    sys = PdeSystem(("t", "x"), ("u",), ((("u", (("t", 1),)), rhs),))
    ansatz = MultiplierAnsatz((Expr.number(1), u, x, t))
    ds = build_determining_system(ansatz, sys, ())
    prob = Problem("heat", ("t", "x"), ("u",), (), sys, (), ansatz, ())
    tree = find_multipliers(prob, 0)
    for Q in tree.generic.multipliers:
        assert euler_operator(Q * sys.g_expr(), "u").is_zero
    assert any(str(m) == "1" for m in tree.generic.multipliers)


def test_ansatz_depending_on_leading_rejected():
    rhs = uxx
    sys = PdeSystem(("t", "x"), ("u",), ((("u", (("t", 1),)), rhs),))
    bad = MultiplierAnsatz((Expr.jet("u", (("t", 1), ("x", 1))),))
    with pytest.raises(AnsatzDependsOnLeading):
        build_determining_system(bad, sys, ())


def test_soundness_random_parameter_points():
    problem = compacton_problem()
    tree = find_multipliers(problem, 3)
    rng = rng_from_env(3)
    for br in tree.all_branches():
        bp = br.branch if hasattr(br, "branch") else br
        sys = bp.problem.system
        G = sys.g_expr()
        X = bp.problem.algebra[0]
        for Q in bp.multipliers:
            res_euler = euler_operator(Q * G, "u")
            cond = prolong(X, Q) + (X.divergence()) * Q
            cond = sys.reduce(cond)
            for _ in range(5):
                point = {n: F(rng.randint(1, 9), rng.randint(1, 3))
                         for n in bp.problem.params}
                # exponent parameters are sampled as integers
                for n in ("p", "q"):
                    if n in point:
                        point[n] = F(rng.randint(2, 6))
                assert res_euler.subs_params(point).is_zero
                assert cond.subs_params(point).is_zero


def test_determinism():
    t1 = find_multipliers(compacton_problem(), 3)
    t2 = find_multipliers(compacton_problem(), 3)
    s1 = [(tuple(str(c) for c in b.constraints),
           tuple(str(m) for m in b.multipliers))
          for b in t1.all_branches()]
    s2 = [(tuple(str(c) for c in b.constraints),
           tuple(str(m) for m in b.multipliers))
          for b in t2.all_branches()]
    assert s1 == s2


def test_independent_exprs_drops_dependent_combinations():
    got = independent_exprs([x - c * t, x, t, Expr.zero()])
    assert len(got) == 2


def _dense_nullspace(rows, ncols):
    """Reference rational null space by plain Gauss-Jordan."""
    m = [row[:] for row in rows]
    nrows = len(m)
    piv_cols = []
    r = 0
    for col in range(ncols):
        piv = None
        for i in range(r, nrows):
            if m[i][col]:
                piv = i
                break
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        pv = m[r][col]
        m[r] = [v / pv for v in m[r]]
        for i in range(nrows):
            if i != r and m[i][col]:
                f = m[i][col]
                m[i] = [vi - f * vr for vi, vr in zip(m[i], m[r])]
        piv_cols.append(col)
        r += 1
    free = [cNum for cNum in range(ncols) if cNum not in piv_cols]
    basis = []
    for fcol in free:
        vec = [F(0)] * ncols
        vec[fcol] = F(1)
        for rr, pcol in enumerate(piv_cols):
            vec[pcol] = -m[rr][fcol]
        basis.append(vec)
    return basis


def test_numeric_mode_matches_dense_nullspace_on_50_systems():
    rng = random.Random(20200531)
    for trial in range(50):
        n = rng.randint(2, 12)
        rows_n = rng.randint(1, 14)
        dense = [[F(rng.randint(-3, 3)) for _ in range(n)]
                 for _ in range(rows_n)]
        unknowns = tuple(f"c{i}" for i in range(n))
        rows = []
        for drow in dense:
            row = {unknowns[i]: Poly.const(v)
                   for i, v in enumerate(drow) if v}
            if row:
                rows.append(row)
        pivots, ech, _ = _eliminate(rows, unknowns, ())
        vecs = _null_space(ech, pivots, unknowns)
        ref = _dense_nullspace(dense, n)
        assert len(vecs) == len(ref), f"trial {trial}"
        # spans agree: every engine vector is killed by the dense matrix
        for vec in vecs:
            col = [vec[unknowns[i]].const_value() for i in range(n)]
            for drow in dense:
                assert sum(dv * cv for dv, cv in zip(drow, col)) == 0
