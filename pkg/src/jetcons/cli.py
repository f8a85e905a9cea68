"""Command-line interface.

Exit codes: 0 success / verified, 1 verification failure, 2 usage or
parse error.  `--json` emits machine-readable bundles with expressions
serialized in the text grammar.
"""

from __future__ import annotations

import argparse
import json
import sys

from .detsys import CaseTree
from .expr import Expr, ExprError, is_zero_mod
from .model import Problem
from .parser import ParseError, SymbolTable, parse_expr
from .problems import (
    ProblemFileError, ResultBundle, bundle_to_json, diff_expected,
    load_problem, run_problem,
)
from . import reduction as red


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="jetcons",
        description="Symmetry-invariant conservation-law multipliers and "
                    "first integrals of symmetry-reduced ODEs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_find = sub.add_parser("find-multipliers",
                            help="classify invariant multipliers")
    p_find.add_argument("problem")
    p_find.add_argument("--branch-depth", type=int, default=3)
    p_find.add_argument("--json", action="store_true")

    p_cur = sub.add_parser("build-current",
                           help="reconstruct a conserved current")
    p_cur.add_argument("problem")
    p_cur.add_argument("--multiplier", required=True,
                       help="index into the find-multipliers listing, or an "
                            "expression")
    p_cur.add_argument("--branch-depth", type=int, default=3)
    p_cur.add_argument("--json", action="store_true")

    p_red = sub.add_parser("reduce",
                           help="reduce and extract first integrals")
    p_red.add_argument("problem")
    p_red.add_argument("--branch-depth", type=int, default=3)
    p_red.add_argument("--json", action="store_true")
    p_red.add_argument("--check-expected", action="store_true",
                       help="diff the results against the [expected] data")

    p_ver = sub.add_parser("verify",
                           help="verify a first integral of the reduced ODE")
    p_ver.add_argument("problem")
    p_ver.add_argument("--integral", required=True)
    p_ver.add_argument("--branch-depth", type=int, default=3)
    p_ver.add_argument("--json", action="store_true")

    args = ap.parse_args(argv)
    try:
        problem = load_problem(args.problem)
    except (ProblemFileError, ParseError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "find-multipliers":
            return cmd_find(problem, args)
        if args.command == "build-current":
            return cmd_current(problem, args)
        if args.command == "reduce":
            return cmd_reduce(problem, args)
        if args.command == "verify":
            return cmd_verify(problem, args)
    except ExprError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 2


def _print_tree(tree: CaseTree) -> None:
    idx = 0
    for branch in tree.all_branches():
        cons = ", ".join(str(c) for c in branch.constraints) or "generic"
        print(f"branch [{cons}]")
        if branch.nonzeros:
            print("  assuming nonzero:",
                  ", ".join(str(p) for p in branch.nonzeros))
        if not branch.multipliers:
            print("  (no invariant multipliers)")
        for m in branch.multipliers:
            print(f"  Q[{idx}] = {m}")
            idx += 1


def _tree_json(tree: CaseTree) -> dict:
    out = {"branches": []}
    for branch in tree.all_branches():
        out["branches"].append({
            "constraints": [str(c.poly) + " = 0" for c in branch.constraints],
            "nonzero": [str(p) for p in branch.nonzeros],
            "multipliers": [str(m) for m in branch.multipliers],
        })
    return out


def cmd_find(problem: Problem, args) -> int:
    from .detsys import find_multipliers
    tree = find_multipliers(problem, args.branch_depth)
    if args.json:
        print(json.dumps(_tree_json(tree), indent=2))
    else:
        _print_tree(tree)
    return 0


def _enumerate_multipliers(tree: CaseTree):
    idx = 0
    for branch in tree.all_branches():
        for m in branch.multipliers:
            yield idx, branch, m
            idx += 1


def cmd_current(problem: Problem, args) -> int:
    from .detsys import find_multipliers
    from .diffops import euler_operator, invert_divergence
    tree = find_multipliers(problem, args.branch_depth)
    spec = args.multiplier
    chosen = []
    if spec.isdigit():
        want = int(spec)
        for idx, branch, m in _enumerate_multipliers(tree):
            if idx == want:
                chosen.append((branch, m))
        if not chosen:
            print(f"error: multiplier index {want} out of range",
                  file=sys.stderr)
            return 2
    else:
        symbols = SymbolTable(
            ivars=problem.ivars, deps=problem.deps,
            params=tuple(problem.params) +
            tuple(n for n, _ in problem.derived))
        try:
            Q = parse_expr(spec, symbols)
        except ParseError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        resid = problem.eliminate(
            euler_operator(Q * problem.system.g_expr(0),
                           problem.system.deps[0]))
        if not resid.is_zero:
            print("verification failure: not a multiplier; "
                  f"Euler residual {resid}", file=sys.stderr)
            return 1
        chosen.append((tree.generic, Q))
    out = []
    for branch, Q in chosen:
        sys0 = branch.problem.system
        cur = invert_divergence(Q * sys0.g_expr(0), sys0.ivars, sys0.deps)
        rec = {"multiplier": str(Q),
               "constraints": [str(c.poly) + " = 0"
                               for c in branch.constraints],
               "current": {v: str(e) for v, e in cur.components}}
        out.append(rec)
        if not args.json:
            cons = ", ".join(str(c) for c in branch.constraints) or "generic"
            print(f"multiplier {Q}   [{cons}]")
            for v, e in cur.components:
                print(f"  {v}-component: {e}")
    if args.json:
        print(json.dumps({"currents": out}, indent=2))
    return 0


def cmd_reduce(problem: Problem, args) -> int:
    bundle = run_problem(problem, args.branch_depth)
    if args.json:
        print(json.dumps(bundle_to_json(bundle), indent=2))
    else:
        _print_bundle(bundle)
    rc = 0
    for br in bundle.branches:
        if br.errors:
            rc = 1
    if args.check_expected:
        items = diff_expected(bundle)
        for item in items:
            status = "ok" if item.ok else "FAIL"
            print(f"[{status}] {item.name}"
                  + (f": {item.detail}" if item.detail else ""))
            if not item.ok:
                rc = 1
    return rc


def _print_bundle(bundle: ResultBundle) -> None:
    for br in bundle.branches:
        b = br.branch
        cons = ", ".join(str(c) for c in b.constraints) or "generic"
        print(f"branch [{cons}]")
        if not b.multipliers:
            print("  (no invariant multipliers)")
            continue
        if br.reduced is not None:
            print(f"  reduced ODE: {br.reduced.expr} = 0")
        for rec in br.integrals:
            print(f"  Q = {rec.multiplier}")
            print(f"    {rec.constant_name}: psi = {rec.psi}"
                  + ("   (trivial)" if rec.trivial else ""))
            if not rec.routes_agree:
                print("    WARNING: first-integral routes disagree")
        if br.rank is not None:
            print(f"  independence rank: {br.rank}")
            for rel in br.relations:
                print("  relation: "
                      + " + ".join(f"({c})*{lab}" for lab, c in rel)
                      + " = 0")
        for err in br.errors:
            print(f"  error: {err}")


def cmd_verify(problem: Problem, args) -> int:
    bundle = run_problem(problem, args.branch_depth)
    newdeps = tuple(d.upper() for d in problem.deps if d.upper() != d)
    symbols = SymbolTable(
        ivars=problem.ivars + ("zeta", "rho", "chi", "r"),
        deps=problem.deps + newdeps,
        params=tuple(problem.params) + tuple(n for n, _ in problem.derived))
    try:
        psi = parse_expr(args.integral, symbols)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    reports = []
    verified = False
    for br in bundle.branches:
        if br.reduced is None:
            continue
        derived = br.branch.problem.derived_map()
        values = dict(br.branch.resolution)
        cand = psi.subs_params(values) if values else psi
        fi = red.FirstIntegral(psi=cand, constant_name="C",
                               multiplier=Expr.zero(), route="user")
        cons = ", ".join(str(c) for c in br.branch.constraints) or "generic"
        try:
            lam = red.verify_first_integral(fi, br.reduced, derived)
            reports.append({"branch": cons, "verified": True,
                            "lambda": str(lam), "residual": "0"})
            verified = True
        except ExprError as err:
            reports.append({"branch": cons, "verified": False,
                            "residual": str(err)})
    if args.json:
        print(json.dumps({"integral": str(psi), "reports": reports},
                         indent=2))
    else:
        for rep in reports:
            tag = "verified" if rep["verified"] else "FAILED"
            extra = f", lambda = {rep['lambda']}" if rep["verified"] else \
                f": {rep['residual']}"
            print(f"[{rep['branch']}] {tag}{extra}")
    if not reports:
        print("error: no reduced branch to verify against",
              file=sys.stderr)
        return 2
    return 0 if verified else 1


if __name__ == "__main__":
    sys.exit(main())
