import csv
import io
import json
import math

import pytest

from stiffsrk import families as F
from stiffsrk.cli import main


def run(capsys, *argv, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr("sys.stdin", io.StringIO(stdin))
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def spec_file(tmp_path, family, params=None, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"family": family, "params": params or {}}))
    return str(path)


def test_family_pipes_into_verify(tmp_path, capsys, monkeypatch):
    spec = spec_file(tmp_path, "O10_VI", {"B11_3": 0.0, "B32_3": 2.0})
    code, out, _ = run(capsys, "family", "--family", spec)
    assert code == 0
    code, out, _ = run(capsys, "verify", "--tableau", "-", "--order", "1.0", stdin=out, monkeypatch=monkeypatch)
    assert code == 0
    report = json.loads(out)
    assert report["effective_order"] == 1.0 and report["lambda"] == pytest.approx(0.0)


@pytest.mark.parametrize("fid", F.FAMILY_IDS)
def test_verify_defaults(tmp_path, capsys, fid):
    code, out, _ = run(capsys, "verify", "--family", spec_file(tmp_path, fid))
    assert code == 0
    assert json.loads(out)["order_tested"] == F.advertised_order(fid)


def test_verify_fails_when_order_not_met(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--family", spec_file(tmp_path, "EFF_05"), "--order", "1.0")
    assert code == 1 and json.loads(out)["effective_order"] == 0.5


def test_tolerance_from_environment(tmp_path, capsys, monkeypatch):
    spec = spec_file(tmp_path, "O10_V")
    monkeypatch.setenv("SRK_DEFAULT_TOL", "1e-30")
    code, out, _ = run(capsys, "verify", "--family", spec)
    assert code == 1 and json.loads(out)["tol"] == 1e-30
    monkeypatch.setenv("SRK_DEFAULT_TOL", "abc")
    code, _, err = run(capsys, "verify", "--family", spec)
    assert code == 2 and json.loads(err)["error"] == "validation"


def test_family_by_id(capsys):
    code, out, _ = run(capsys, "family", "--id", "EFF_05", "--param", "a1=0", "--param", "a2=0.5")
    assert code == 0
    assert json.loads(out)["A"] == [[0.0, 0.0], [0.5, 0.5]]


def test_region_matches_exact_domain(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, _, _ = run(capsys, "region", "--family", spec_file(tmp_path, "EFF_05", {"a1": 0, "a2": 0.5}),
                     "--res", "41", "--out", str(out), "--plot")
    assert code == 0
    assert (tmp_path / "r.png").stat().st_size > 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 41 * 41
    for r in rows:
        h, k2 = float(r["hhat"]), float(r["ksq"])
        margin = 2 * h + k2
        if abs(margin) > 1e-9:
            assert (r["stable"] == "1") == (margin < 0)


def test_region_is_byte_identical(tmp_path, capsys):
    spec = spec_file(tmp_path, "EFF_II")
    run(capsys, "region", "--family", spec, "--res", "20", "--out", str(tmp_path / "a.csv"))
    run(capsys, "region", "--family", spec, "--res", "20", "--out", str(tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_probe_exit_codes(tmp_path, capsys):
    a = 1 / 256
    bad = spec_file(tmp_path, "EFF_II", {"a1": a, "a2": a, "a3": 1, "b": 1})
    code, out, _ = run(capsys, "probe", "--family", bad, "--seed", "0")
    assert code == 1
    assert json.loads(out)["counterexample"]["gain"] >= 1
    good = spec_file(tmp_path, "EFF_II", {"a1": 0.25, "a2": 0.25, "a3": 1, "b": 1}, "g.json")
    code, out, _ = run(capsys, "probe", "--family", good, "--seed", "0")
    assert code == 0 and json.loads(out)["verdict"] == "pass"


def test_simulate_writes_csv_and_stats(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, _, _ = run(capsys, "simulate", "--family", spec_file(tmp_path, "EFF_II"), "--problem", "reduced_sdae",
                     "--steps", "10", "--seed", "3", "--out", str(out))
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "x1", "x2"] and len(rows) == 12
    stats = json.loads((tmp_path / "t.stats.json").read_text())
    assert stats["f_evals"] == 30


def test_simulate_to_stdout_is_deterministic(tmp_path, capsys):
    spec = spec_file(tmp_path, "EFF_05")
    _, a, _ = run(capsys, "simulate", "--family", spec, "--steps", "5", "--seed", "9")
    _, b, _ = run(capsys, "simulate", "--family", spec, "--steps", "5", "--seed", "9")
    assert a == b and a.startswith("t,x1\n")


def test_converge(tmp_path, capsys):
    out = tmp_path / "c.csv"
    code, _, _ = run(capsys, "converge", "--family", spec_file(tmp_path, "EFF_II"), "--paths", "50",
                     "--exponents", "3,4,5", "--seed", "1", "--out", str(out), "--plot")
    assert code == 0
    summary = json.loads((tmp_path / "c.json").read_text())
    assert summary["n_paths"] == 50 and math.isfinite(summary["slope"])
    assert (tmp_path / "c.png").exists()


@pytest.mark.parametrize("argv", [
    ["simulate", "--family", "x.json", "--steps", "5"],  # missing seed
    ["verify"],
    ["region", "--family", "missing.json"],
    ["bogus"],
])
def test_validation_failures_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "error" in json.loads(err)


def test_numeric_failure_exits_1(tmp_path, capsys):
    spec = spec_file(tmp_path, "O10_VI", {"B11_3": 3.0, "B32_3": 0.1})
    code, _, err = run(capsys, "family", "--family", spec)
    assert code == 1
    assert json.loads(err)["type"] == "DiscriminantNegative"


def test_region_bad_range_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "region", "--family", spec_file(tmp_path, "EFF_II"), "--ksq-min", "-1")
    assert code == 2 and json.loads(err)["type"] == "BadRange"


def test_singular_tableau_on_sdae_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--family", spec_file(tmp_path, "O10_X"), "--problem",
                       "reduced_sdae", "--seed", "1")
    assert code == 2 and json.loads(err)["type"] == "StructureError"
