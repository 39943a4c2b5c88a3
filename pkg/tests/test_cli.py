import json
import subprocess
import sys

import pytest

from keytrace_sat.cli import load_probes, main
from keytrace_sat.cnf import write_dimacs
from keytrace_sat.events import load_trail
from keytrace_sat.keytrace import extract_keytrace, load_keytrace

from conftest import APPX_F


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--n-min", "5", "--n-max", "12", "--count", "15", "--seed", "4",
                 "--out-dir", str(d / "ds")]) == 0
    return d


def test_gen_manifest(work):
    manifest = json.loads((work / "ds" / "manifest.json").read_text())
    assert manifest["count"] == 15 and manifest["seed"] == 4
    assert len(list((work / "ds").glob("*.cnf"))) == 15


def test_solve_extract_replay(work, capsys):
    cnf = work / "appx.cnf"
    cnf.write_bytes(write_dimacs(APPX_F))
    rc = main(["solve", str(cnf), "--trail-out", str(work / "t.trail"),
               "--stats-out", str(work / "s.json")])
    out = capsys.readouterr().out
    assert rc == 10 and out.startswith("s SATISFIABLE\nv ")
    stats = json.loads((work / "s.json").read_text())
    assert stats["outcome"] == "SAT"
    assert main(["extract", str(work / "t.trail"), "-o", str(work / "k.kt")]) == 0
    n, kt = load_keytrace(work / "k.kt")
    assert n == 4 and kt == extract_keytrace(load_trail(work / "t.trail"))
    assert main(["replay", str(cnf), str(work / "k.kt"), "--stats-out", str(work / "r.json")]) == 0
    assert json.loads((work / "r.json").read_text())["conflicts"] == 0
    rc = main(["solve", str(cnf), "--policy", f"expert:{work / 'k.kt'}", "--budget", "5"])
    assert rc == 10 and "queries=" in capsys.readouterr().out


def test_unsat_exit_code(tmp_path, capsys):
    cnf = tmp_path / "u.cnf"
    cnf.write_text("p cnf 1 2\n1 0\n-1 0\n")
    assert main(["solve", str(cnf)]) == 20
    assert capsys.readouterr().out.startswith("s UNSATISFIABLE")


def test_probes_train_eval(work, capsys):
    probes = work / "p.jsonl"
    assert main(["probes", str(work / "ds"), "--out", str(probes)]) == 0
    recs = [json.loads(l) for l in probes.read_text().splitlines()]
    assert recs and {"cnf_path", "prefix_tokens", "target", "unsat"} <= set(recs[0])
    assert recs[0]["prefix_tokens"] == ""
    loaded = load_probes(probes)
    assert [p.target for p in loaded] == [r["target"] for r in recs if not r["unsat"]]
    model = work / "m.bcm"
    assert main(["train-bc", "--probes", str(probes), "--order", "10000", "--alpha", "0.5",
                 "--perms", "2", "--out", str(model)]) == 0
    assert "accuracy=1.0000" in capsys.readouterr().out
    assert json.loads(model.read_text())["format"] == "bcmodel v1"
    csv1, csv2 = work / "a.csv", work / "b.csv"
    for csv in (csv1, csv2):
        assert main(["eval", "--dataset", str(work / "ds"), "--method", f"bc:{model}",
                     "--budget", "3", "--out", str(work / "e.json"), "--csv", str(csv)]) == 0
    assert csv1.read_bytes() == csv2.read_bytes()
    report = json.loads((work / "e.json").read_text())
    assert report["instances"] == 15 and report["method"] == f"bc:{model}"


def test_benches_and_schedule(work, capsys):
    assert main(["bench-breakdown", "--dataset", str(work / "ds"), "--out", str(work / "b.json")]) == 0
    data = json.loads((work / "b.json").read_text())
    assert set(data) == {"propagate", "analyze", "decide", "instances"}
    assert main(["bench-replay", "--dataset", str(work / "ds"), "--out", str(work / "br.json")]) == 0
    assert "propagations" in json.loads((work / "br.json").read_text())
    assert main(["schedule", "--dataset", str(work / "ds"), "--out", str(work / "s.json")]) == 0
    rows = json.loads((work / "s.json").read_text())
    assert [r["variant"] for r in rows] == ["call_at_first", "call_after_3"]


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "keytrace_sat.cli", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for cmd in ("gen", "solve", "extract", "replay", "probes", "train-bc", "eval",
                "bench-breakdown", "bench-replay", "schedule"):
        assert cmd in out


def test_bad_policy(work):
    with pytest.raises(SystemExit):
        main(["solve", str(work / "ds" / "00000.cnf"), "--policy", "magic"])
