from __future__ import annotations

import json
from collections import Counter
from fractions import Fraction
from pathlib import Path

import pytest

from ellgen.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from ellgen.suite import CONFIG_ENV, fixture_path

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def fx(name: str) -> str:
    return str(fixture_path(name))


def test_point_genus_is_one(capsys) -> None:
    code, out, _ = run(capsys, "compute", fx("point"), "--qmax", "2")
    assert code == EXIT_OK
    assert out == "1\n"


def test_k3_constant_row(capsys) -> None:
    code, out, _ = run(capsys, "compute", fx("k3"), "--qmax", "1", "--ywin", "2")
    assert code == EXIT_OK
    assert out.splitlines()[:3] == ["2 y^-1", "20", "2 y"]


@pytest.mark.parametrize(
    "golden,argv",
    [
        ("k3_q2.txt", ["compute", "k3", "--qmax", "2", "--ywin", "3"]),
        ("k3_q2.csv", ["compute", "k3", "--qmax", "2", "--ywin", "3", "--format", "csv"]),
        ("k3_hilbert_p2.txt", ["hilbert", "k3", "--pmax", "2", "--qmax", "1", "--ywin", "2"]),
        ("mckay_lhs_q1.txt", ["orbifold", "mckay_lhs", "--qmax", "1", "--ywin", "2"]),
    ],
)
def test_golden(capsys, golden: str, argv: list[str]) -> None:
    argv = [argv[0], fx(argv[1]), *argv[2:]]
    code, out, _ = run(capsys, *argv)
    assert code == EXIT_OK
    assert out == (GOLDEN / golden).read_text()
    assert run(capsys, *argv)[1] == out


def _text_terms(text: str) -> Counter:
    terms: Counter = Counter()
    for line in text.splitlines():
        coeff, _, mono = line.partition(" ")
        exps = {"p": Fraction(0), "q": Fraction(0), "y": Fraction(0)}
        for part in filter(None, mono.split("*")):
            sym, _, e = part.partition("^")
            exps[sym] = Fraction(e or 1)
        terms[(exps["p"], exps["q"], exps["y"], Fraction(coeff))] += 1
    return terms


def _csv_terms(text: str) -> Counter:
    rows = text.splitlines()
    assert rows[0] == "p,q,y,coeff"
    return Counter(tuple(Fraction(x) for x in r.split(",")) for r in rows[1:])


def test_csv_matches_text() -> None:
    text = (GOLDEN / "k3_q2.txt").read_text()
    csv = (GOLDEN / "k3_q2.csv").read_text()
    assert _text_terms(text) == _csv_terms(csv)


def test_out_flag(tmp_path, capsys) -> None:
    target = tmp_path / "k3.txt"
    code, out, _ = run(capsys, "compute", fx("k3"), "--qmax", "2", "--ywin", "3", "--out", str(target))
    assert code == EXIT_OK and out == ""
    assert target.read_text() == (GOLDEN / "k3_q2.txt").read_text()


def test_pair_hat(capsys) -> None:
    code, out, _ = run(capsys, "pair", fx("blowup_p2"), "--hat", "--qmax", "1", "--ywin", "2")
    assert code == EXIT_OK and out


def test_symmetric_orbifold_matches_dmvv(capsys) -> None:
    code, sym, _ = run(capsys, "orbifold", fx("k3"), "--symmetric", "2", "--qmax", "1", "--ywin", "3")
    assert code == EXIT_OK
    code, gen, _ = run(capsys, "dmvv", fx("k3"), "--pmax", "2", "--qmax", "1", "--ywin", "3")
    assert code == EXIT_OK
    p2 = [line.replace("p^2*", "").replace(" p^2", "") for line in gen.splitlines() if "p^2" in line]
    assert sorted(p2) == sorted(sym.splitlines())


def test_config_file_and_env(tmp_path, capsys, monkeypatch, local_fixture) -> None:
    cfg = str(local_fixture("run.toml"))
    code, via_flag, _ = run(capsys, "compute", fx("k3"), "--config", cfg)
    assert code == EXIT_OK
    assert via_flag == run(capsys, "compute", fx("k3"), "--qmax", "1", "--ywin", "2")[1]
    monkeypatch.setenv(CONFIG_ENV, cfg)
    assert run(capsys, "compute", fx("k3"))[1] == via_flag
    # flags win over the file
    assert run(capsys, "compute", fx("k3"), "--qmax", "2", "--ywin", "3")[1] == (GOLDEN / "k3_q2.txt").read_text()


def test_bad_config(tmp_path, capsys) -> None:
    bad = tmp_path / "bad.toml"
    bad.write_text("[run]\nqmax = 0\n")
    code, _, err = run(capsys, "compute", fx("k3"), "--config", str(bad))
    assert code == EXIT_USAGE and "ell: error:" in err


def test_suite_theta_report(tmp_path, capsys) -> None:
    report = tmp_path / "r.json"
    code, out, _ = run(capsys, "suite", "theta", "--out", str(report))
    assert code == EXIT_OK
    assert "checks passed" in out
    data = json.loads(report.read_text())
    assert data["suite"] == "theta" and data["passed"]
    assert all(c["passed"] for c in data["checks"])


def test_fans(capsys) -> None:
    code, out, _ = run(capsys, "fans", "verify", "all", fx("fan_index3"), "--trials", "2")
    assert code == EXIT_OK and "pass" in out
    code, out, _ = run(capsys, "fans", "verify", "firstorth", fx("fan_index3_wrong"), "--trials", "2")
    assert code == EXIT_FAIL and "FAIL" in out


def test_theta_eval(capsys) -> None:
    code, out, _ = run(capsys, "theta", "eval", "0.5", "1.1i")
    assert code == EXIT_OK and out.strip()
    code, out, _ = run(capsys, "theta", "dump", "--qmax", "1", "--ywin", "2")
    assert code == EXIT_OK and "y^1/2" in out


def test_verify(capsys) -> None:
    assert run(capsys, "verify", "mckay", fx("mckay_lhs"), fx("mckay_rhs"))[0] == EXIT_OK
    assert run(capsys, "verify", "jacobi", fx("k3"), "--trials", "2")[0] == EXIT_OK
    code, _, err = run(capsys, "verify", "jacobi", fx("p2"))
    assert code == EXIT_USAGE and "ell: error:" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["suite", "nosuch"],
        ["compute"],
        ["compute", "/nonexistent/model.toml"],
        ["compute", "k3", "--conductor", "3"],
        ["frobnicate"],
    ],
)
def test_usage_errors(capsys, argv: list[str]) -> None:
    if "k3" in argv:
        argv = [fx("k3") if a == "k3" else a for a in argv]
    assert run(capsys, *argv)[0] == EXIT_USAGE


def test_model_error_message(capsys, local_fixture) -> None:
    code, _, err = run(capsys, "compute", str(local_fixture("bad_delta.toml")))
    assert code == EXIT_USAGE
    assert "bad_delta.toml:14" in err
