"""consoracle: verify jetcons JSON bundles with sympy.

Exit code 0 when every check passes, 1 otherwise.  `--junit FILE`
writes a JUnit-style XML summary.
"""

from __future__ import annotations

import argparse
import json
import sys
from xml.sax.saxutils import escape

from .checks import run_all
from .mutations import mutate


def write_junit(reports, path: str) -> None:
    fails = sum(1 for r in reports if not r.ok)
    lines = [
        '<?xml version="1.0" encoding="utf-8"?>',
        f'<testsuite name="consoracle" tests="{len(reports)}" '
        f'failures="{fails}">',
    ]
    for r in reports:
        lines.append(f'  <testcase name="{escape(r.name)}">')
        if not r.ok:
            lines.append(f'    <failure message="{escape(r.detail)}"/>')
        lines.append("  </testcase>")
    lines.append("</testsuite>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="consoracle")
    sub = ap.add_subparsers(dest="command", required=True)
    p_check = sub.add_parser("check", help="verify a result bundle")
    p_check.add_argument("bundle")
    p_check.add_argument("--junit")
    p_mut = sub.add_parser("mutate", help="emit a corrupted bundle")
    p_mut.add_argument("bundle")
    p_mut.add_argument("--seed", type=int, required=True)
    args = ap.parse_args(argv)

    with open(args.bundle) as fh:
        bundle = json.load(fh)

    if args.command == "mutate":
        print(json.dumps(mutate(bundle, args.seed), indent=2))
        return 0

    reports = run_all(bundle)
    for r in reports:
        status = "ok  " if r.ok else "FAIL"
        extra = f"  {r.detail}" if r.detail else ""
        print(f"[{status}] {r.name}{extra}")
    if args.junit:
        write_junit(reports, args.junit)
    return 0 if all(r.ok for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
