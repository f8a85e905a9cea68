import json
import subprocess
import sys
from pathlib import Path

import pytest

from consoracle.checks import run_all
from consoracle.mutations import mutate

ROOT = Path(__file__).resolve().parent.parent.parent
CORPUS = ROOT / "corpus"

PROBLEMS = ["compacton", "boussinesq", "gkp", "thinfilm", "wave",
            "porous1", "porous3"]


@pytest.fixture(scope="session")
def bundles(tmp_path_factory):
    """Result bundles produced through the engine's CLI (the external
    interface is the only coupling)."""
    out = {}
    tmp = tmp_path_factory.mktemp("bundles")
    for name in PROBLEMS:
        proc = subprocess.run(
            [sys.executable, "-m", "jetcons.cli", "reduce",
             str(CORPUS / f"{name}.prob"), "--json"],
            capture_output=True, text=True, check=True)
        path = tmp / f"{name}.json"
        path.write_text(proc.stdout)
        out[name] = json.loads(proc.stdout)
    return out


@pytest.mark.parametrize("name", PROBLEMS)
def test_bundle_passes_all_checks(bundles, name):
    reports = run_all(bundles[name])
    assert reports, "no checks ran"
    bad = [f"{r.name}: {r.detail}" for r in reports if not r.ok]
    assert not bad, bad


@pytest.mark.parametrize("seed", range(10))
def test_seeded_mutation_fails(bundles, seed):
    corrupted = mutate(bundles["boussinesq"], seed)
    reports = run_all(corrupted)
    assert any(not r.ok for r in reports), \
        f"mutation seed {seed} went undetected"


def test_mutation_is_deterministic(bundles):
    a = mutate(bundles["boussinesq"], 4)
    b = mutate(bundles["boussinesq"], 4)
    assert json.dumps(a) == json.dumps(b)


def test_junit_output(tmp_path, bundles):
    from consoracle.cli import main
    path = tmp_path / "b.json"
    path.write_text(json.dumps(bundles["gkp"]))
    junit = tmp_path / "report.xml"
    rc = main(["check", str(path), "--junit", str(junit)])
    assert rc == 0
    text = junit.read_text()
    assert "<testsuite" in text and 'failures="0"' in text


def test_cli_exit_one_on_corrupted(tmp_path, bundles):
    from consoracle.cli import main
    corrupted = mutate(bundles["boussinesq"], 0)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(corrupted))
    rc = main(["check", str(path)])
    assert rc == 1
