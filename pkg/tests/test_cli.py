import json

import pytest

from jetcons.cli import main

from conftest import CORPUS


def test_find_multipliers_exit_zero(capsys):
    rc = main(["find-multipliers", str(CORPUS / "boussinesq.prob")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "t*x" in out


def test_find_multipliers_json(capsys):
    rc = main(["find-multipliers", str(CORPUS / "compacton.prob"),
               "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    gens = [b for b in doc["branches"] if not b["constraints"]]
    assert gens and set(gens[0]["multipliers"]) == {"1", "u^(q)"}


def test_parse_error_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.prob"
    bad.write_text("[variables]\nindependent = t x\n")
    rc = main(["find-multipliers", str(bad)])
    assert rc == 2


def test_missing_file_exit_two(capsys):
    rc = main(["reduce", "no_such_file.prob"])
    assert rc == 2


def test_verify_good_integral(capsys):
    rc = main(["verify", str(CORPUS / "gkp.prob"), "--integral",
               "diff(V,zeta,3) + (s*mu^2 - nu)*diff(V,zeta,1)"
               " + diff(V,zeta,1)^(p+1)/(p+1)"])
    assert rc == 0
    assert "verified" in capsys.readouterr().out


def test_verify_corrupted_integral_exit_one(capsys):
    rc = main(["verify", str(CORPUS / "gkp.prob"), "--integral",
               "diff(V,zeta,3) - (s*mu^2 - nu)*diff(V,zeta,1)"
               " + diff(V,zeta,1)^(p+1)/(p+1)"])
    assert rc == 1


def test_build_current_by_expression(capsys):
    rc = main(["build-current", str(CORPUS / "compacton.prob"),
               "--multiplier", "u^q", "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["currents"][0]["current"]["t"] == "1/(q + 1)*u^(1+q)"


def test_build_current_rejects_non_multiplier(capsys):
    rc = main(["build-current", str(CORPUS / "compacton.prob"),
               "--multiplier", "u_x"])
    assert rc == 1


def test_reduce_check_expected(capsys):
    rc = main(["reduce", str(CORPUS / "porous1.prob"), "--check-expected"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "FAIL" not in out


def test_reduce_json_roundtrip(capsys):
    rc = main(["reduce", str(CORPUS / "gkp.prob"), "--json"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert any(b.get("integrals") for b in doc["branches"])
