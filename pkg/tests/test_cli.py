import csv
import io
import json

import pytest

from capflp import cli
from capflp.solvers import OptResult


def write(tmp_path, name, positions, cls=None):
    obj = {"positions": positions}
    if cls:
        obj["class"] = cls
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


PMM_FIXTURE = ["4", 0, "2.5", 1, 0, 2, 4, 1, 0]
EQ33 = {"type": "equicap", "m": 3, "k": 3}


def test_solve(tmp_path, capsys):
    f = write(tmp_path, "a.json", [0, 0, 1, 5, 5], {"type": "two", "c1": 3, "c2": 2})
    code, out, _ = run(capsys, "solve", "--objective", "sc", "--oracle", f)
    report = json.loads(out)
    assert code == 0 and report["cost"] == "1" and report["oracle"]["agrees"]
    f = write(tmp_path, "b.json", [0, 0, 0, 0, 0, 1], {"type": "two", "c1": 4, "c2": 4})
    code, out, _ = run(capsys, "solve", "--objective", "mc", f)
    assert code == 0 and json.loads(out)["cost"] == "1/2"
    f = write(tmp_path, "c.json", [3, 3, 3, 3], EQ33 | {"m": 2, "k": 2})
    code, out, _ = run(capsys, "solve", f)
    assert code == 0 and json.loads(out)["cost"] == "0"


def test_solve_oracle_disagreement(tmp_path, capsys, monkeypatch):
    f = write(tmp_path, "a.json", [0, 1, 2, 10], {"type": "equicap", "m": 2, "k": 2})
    real = cli.brute_force_optimal

    def wrong(prof, caps, objective):
        res = real(prof, caps, objective)
        return OptResult(res.placement, res.cost + 1, res.objective)

    monkeypatch.setattr(cli, "brute_force_optimal", wrong)
    code, out, _ = run(capsys, "solve", "--oracle", f)
    assert code == 3 and json.loads(out)["oracle"]["agrees"] is False


def test_input_errors(tmp_path, capsys):
    code, _, err = run(capsys, "solve", str(tmp_path / "missing.json"))
    assert code == 2 and "cannot read" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "solve", str(bad))[0] == 2
    f = write(tmp_path, "noclass.json", [0, 1])
    assert run(capsys, "solve", f)[0] == 2
    f = write(tmp_path, "nan.json", ["nan", 1], {"type": "two", "c1": 1, "c2": 1})
    assert run(capsys, "solve", f)[0] == 2


def test_mech(tmp_path, capsys):
    f = write(tmp_path, "ex1.json", PMM_FIXTURE, EQ33)
    code, out, _ = run(capsys, "mech", "pmm", f)
    report = json.loads(out)
    assert code == 0 and report["placement"]["y"] == ["0", "1", "3"] and report["sc"] == "7/2"
    assert report["violations"] == []
    f = write(tmp_path, "even.json", [0, 0, 1, 1])
    code, _, err = run(capsys, "mech", "ic", f)
    assert code == 2 and "IC requires odd n" in err
    f = write(tmp_path, "eig.json", [0, 0, 0, 0, 0, 1], {"type": "two", "c1": 4, "c2": 4})
    report = json.loads(run(capsys, "mech", "eig", f)[1])
    assert report["mc"] == "1" and report["ratio_mc"] == "2"
    f = write(tmp_path, "pct.json", [0, 1, 2, 2, 4])
    report = json.loads(run(capsys, "mech", "percentile:0.25,0.75", f)[1])
    assert report["placement"]["y"] == ["1", "2"] and "ratio_sc" not in report


def test_audit_exit_codes(tmp_path, capsys):
    f = write(tmp_path, "ex1.json", PMM_FIXTURE, EQ33)
    code, out, _ = run(capsys, "audit", "gsp", "--mech", "pmm", "--coalition", "2", f)
    report = json.loads(out)
    assert code == 1 and report["passed"] is False
    # raw indices 2 and 5 hold 2.5 and 2, i.e. x_7 and x_6 once sorted
    assert report["witness"]["agents"] == [2, 5]
    assert sorted(report["witness"]["true_positions"]) == ["2", "5/2"]
    code, out, _ = run(capsys, "audit", "truthful", "--mech", "eig", "--trials", "100", "--seed", "1")
    assert code == 0 and json.loads(out)["note"] == "no violation found over candidate set"
    code, out, _ = run(capsys, "audit", "anonymous", "--mech", "pipm")
    assert code == 0
    code, _, err = run(capsys, "audit", "gsp", "--mech", "pmm", "--coalition", "3", "--budget", "1000", f)
    assert code == 4 and "budget" in err
    code, _, _ = run(capsys, "audit", "truthful", "--mech", "pmm", "--n", "5")
    assert code == 2


def test_reports_are_reproducible(tmp_path, capsys):
    f = write(tmp_path, "ex1.json", PMM_FIXTURE, EQ33)
    first = run(capsys, "audit", "gsp", "--mech", "pmm", f)[1]
    assert first == run(capsys, "audit", "gsp", "--mech", "pmm", f)[1]
    argv = ["ratio-sweep", "--mech", "eig", "--n", "6", "--c1", "4", "--c2", "3", "--count", "200", "--seed", "5"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]
    h1 = json.loads(first)["instance_hash"]
    g = write(tmp_path, "copy.json", PMM_FIXTURE, EQ33)
    assert json.loads(run(capsys, "audit", "gsp", "--mech", "pmm", g)[1])["instance_hash"] == h1


def test_ratio_sweep_csv(tmp_path, capsys):
    code, out, _ = run(capsys, "ratio-sweep", "--mech", "pmm", "--mech", "pipm", "--m", "3", "--k", "2",
                       "--objective", "mc", "--count", "300", "--seed", "3", "--witness-dir", str(tmp_path / "w"))
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["mechanism"] for r in rows] == ["pmm", "pipm"]
    assert list(rows[0])[:10] == ["mechanism", "objective", "n", "params", "seed", "instances", "max_ratio",
                                  "bound", "at_bound", "witness_file"]
    for r in rows:
        assert r["instances"] == "300" and r["bound"] == "2"
        assert json.loads(open(r["witness_file"]).read())["class"] == {"type": "equicap", "m": 3, "k": 2}


def test_tight(capsys):
    code, out, _ = run(capsys, "tight", "--mech", "ic", "--c1", "3", "--c2", "2", "--objective", "mc", "--eps", "1/30")
    report = json.loads(out)
    assert code == 0 and report["ratio"] == "20/11" and report["relation"] == "approaches bound"
    report = json.loads(run(capsys, "tight", "--mech", "pmm", "--m", "3", "--k", "2")[1])
    assert report["ratio"] == report["bound"] == "3"
    assert run(capsys, "tight", "--mech", "pmm", "--m", "3", "--k", "2", "--objective", "mc")[0] == 2


def test_table1(capsys, tmp_path):
    code, out, _ = run(capsys, "table1", "--m", "3", "--k", "3")
    assert code == 0 and "LB*         4" in out and "UB          4 (PMM)" in out
    report = json.loads(run(capsys, "table1", "--m", "4", "--k", "2", "--format", "json")[1])
    assert report["sc_lb_anonymous"] == report["sc_ub"] == "3" and report["sc_ub_mechanism"] == "PIPM"
    report = json.loads(run(capsys, "table1", "--n", "6", "--c1", "3", "--c2", "3", "--format", "json")[1])
    assert report["sc_ub"] == "2" and report["mc_ub"] == "2"
    assert run(capsys, "table1", "--c1", "3", "--c2", "3")[0] == 2
    out_file = tmp_path / "t.txt"
    assert run(capsys, "table1", "--m", "3", "--k", "3", "--out", str(out_file))[0] == 0
    assert "PMM" in out_file.read_text()


def test_unknown_arguments(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["table1", "--m", "3", "--k", "3", "extra"])
    assert exc.value.code == 2
