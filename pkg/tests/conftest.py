import time
from pathlib import Path

import pytest

from jetcons.problems import load_problem, run_problem

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

PROBLEMS = ["compacton", "boussinesq", "gkp", "thinfilm", "wave",
            "porous1", "porous3"]


@pytest.fixture(scope="session")
def bundles():
    """Run every corpus problem once; records (bundle, wall seconds)."""
    out = {}
    for name in PROBLEMS:
        problem = load_problem(CORPUS / f"{name}.prob")
        t0 = time.monotonic()
        bundle = run_problem(problem, branch_depth=3)
        out[name] = (bundle, time.monotonic() - t0)
    return out
