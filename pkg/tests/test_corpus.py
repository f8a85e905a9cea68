import json
from pathlib import Path

import pytest

from jetcons.parser import SymbolTable, parse_expr
from jetcons.problems import (
    bundle_to_json, diff_expected, load_problem, run_problem,
)

from conftest import CORPUS, PROBLEMS


@pytest.mark.parametrize("name", PROBLEMS)
def test_expected_results_all_match(bundles, name):
    bundle, _elapsed = bundles[name]
    items = diff_expected(bundle)
    bad = [f"{i.name}: {i.detail}" for i in items if not i.ok]
    assert not bad, bad


@pytest.mark.parametrize("name", PROBLEMS)
def test_no_branch_errors(bundles, name):
    bundle, _ = bundles[name]
    for br in bundle.branches:
        assert not br.errors, br.errors


@pytest.mark.parametrize("name", PROBLEMS)
def test_both_first_integral_routes_agree(bundles, name):
    bundle, _ = bundles[name]
    for br in bundle.branches:
        for rec in br.integrals:
            assert rec.routes_agree


def test_problem_files_roundtrip_through_grammar():
    # parsed expressions print and re-parse to equal normal forms
    for name in PROBLEMS:
        prob = load_problem(CORPUS / f"{name}.prob")
        st = SymbolTable(
            ivars=prob.ivars, deps=prob.deps,
            params=tuple(prob.params) + tuple(n for n, _ in prob.derived))
        for (dep, midx), rhs in prob.system.equations:
            assert parse_expr(str(rhs), st) == rhs
        for b in prob.ansatz.basis:
            assert parse_expr(str(b), st) == b


def test_json_bundle_roundtrip(bundles):
    bundle, _ = bundles["compacton"]
    doc = bundle_to_json(bundle)
    text = json.dumps(doc)
    back = json.loads(text)
    prob = bundle.problem
    st = SymbolTable(
        ivars=prob.ivars + ("zeta", "rho", "chi"),
        deps=prob.deps + ("U",),
        params=tuple(prob.params) + tuple(n for n, _ in prob.derived))
    flat = {str(m) for br in bundle.tree.all_branches()
            for m in br.multipliers}
    seen = set()
    for brec in back["branches"]:
        for ms in brec["multipliers"]:
            seen.add(ms)
            reparsed = parse_expr(ms, st)
            assert str(reparsed) == ms
    assert flat == seen
    for brec in back["branches"]:
        for irec in brec.get("integrals", []):
            e = parse_expr(irec["psi"], st)
            assert parse_expr(str(e), st) == e


def test_run_determinism(bundles):
    bundle, _ = bundles["boussinesq"]
    again = run_problem(load_problem(CORPUS / "boussinesq.prob"), 3)
    assert json.dumps(bundle_to_json(bundle)) == \
        json.dumps(bundle_to_json(again))


def test_thin_film_negative_result(bundles):
    bundle, _ = bundles["thinfilm"]
    # no invariant multipliers beyond the constant on p = 3
    assert bundle.tree.generic.multipliers == ()
    for br in bundle.tree.branches:
        assert {str(m) for m in br.multipliers} <= {"1"}


def test_wave_conformal_integral_is_trivial(bundles):
    bundle, _ = bundles["wave"]
    found = 0
    for br in bundle.branches:
        cons = {str(c.poly) for c in br.branch.constraints}
        if "p - 5" in cons:
            assert br.integrals, br.errors
            for rec in br.integrals:
                assert rec.trivial
                assert rec.psi.is_zero
            found += 1
    assert found == 2  # nu = c and nu = -c
