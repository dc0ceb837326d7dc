import csv
import io
import json
import math
import os
import subprocess
import sys

import pytest

from geodesic_compass import cli
from geodesic_compass import closed_form as cf
from geodesic_compass.params import ModelParams as P


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("argv, columns", [
    (["mean"], cli.COLUMNS["mean"]),
    (["conditional", "--n", "2"], cli.COLUMNS["conditional"]),
    (["moment2"], cli.COLUMNS["moment2"]),
    (["jumpback"], cli.COLUMNS["jumpback"]),
    (["jumpback", "--nu", "1.5"], cli.COLUMNS["jumpback_nu"]),
    (["spherical"], cli.COLUMNS["spherical"]),
    (["simulate", "--reps", "2000"], cli.COLUMNS["simulate"]),
])
def test_csv_header(argv, columns):
    code, out, _ = run(*argv)
    assert code == 0
    assert out.splitlines()[0] == ",".join(columns)
    assert len(out.splitlines()) == 2


def test_mean_value_round_trips():
    code, out, _ = run("mean", "--lambda", "2", "--c", "0.5", "--t", "3")
    assert code == 0
    assert float(rows(out)[0]["value"]) == cf.mean_cosh(P(2.0, 0.5, 3.0))


def test_conditional_example():
    _, out, _ = run("conditional", "--n", "0", "--c", "1", "--t", "1")
    assert float(rows(out)[0]["value"]) == pytest.approx(math.cosh(1.0), rel=1e-15)


def test_spherical_critical_example():
    _, out, _ = run("spherical", "--lambda", "2", "--c", "1", "--t", "1")
    assert float(rows(out)[0]["value"]) == pytest.approx(2 * math.exp(-1.0), rel=1e-14)


def test_linear_and_log_sweeps():
    _, out, _ = run("mean", "--sweep", "t:0:2:5")
    assert [float(r["t"]) for r in rows(out)] == [0.0, 0.5, 1.0, 1.5, 2.0]
    _, out, _ = run("moment2", "--sweep", "lambda:0.1:10:3:log")
    assert [float(r["lambda"]) for r in rows(out)] == pytest.approx([0.1, 1.0, 10.0], rel=1e-15)
    _, out, _ = run("jumpback", "--sweep", "nu:0.5:2:4")
    assert len(rows(out)) == 4 and "nu" in rows(out)[0]


def test_json_output():
    code, out, _ = run("jumpback", "--k", "2", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data[0]["k"] == 2
    assert data[0]["value"] == cf.jumpback_mean(P(1.0, 1.0, 1.0), 2)


def test_out_file(tmp_path):
    path = tmp_path / "m.csv"
    code, out, _ = run("mean", "--out", str(path))
    assert code == 0 and out == ""
    assert path.read_text().startswith("lambda,c,t,value\n")


def test_simulate_row_contents():
    _, out, _ = run("simulate", "--kind", "jumpback", "--k", "2", "--reps", "5000", "--seed", "4")
    r = rows(out)[0]
    assert r["kind"] == "jumpback2" and r["condition"] == "N>=2" and r["seed"] == "4"
    assert float(r["analytic"]) == cf.jumpback_mean(P(1.0, 1.0, 1.0), 2)
    _, out, _ = run("simulate", "--kind", "cos", "--n", "1", "--reps", "5000")
    assert rows(out)[0]["condition"] == "N=1"


def test_simulate_is_deterministic_across_workers():
    argv = ["simulate", "--reps", "40000", "--seed", "17", "--sweep", "c:0.5:1.5:3"]
    one = run(*argv, "--workers", "1")[1]
    again = run(*argv, "--workers", "1")[1]
    many = run(*argv, "--workers", "3")[1]
    assert one == again == many


def test_sweep_points_use_distinct_streams():
    _, out, _ = run("simulate", "--reps", "2000", "--sweep", "t:1:1:2")
    a, b = rows(out)
    assert a["mean"] != b["mean"]


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["mean", "--lambda", "-1"],
    ["mean", "--t", "-0.5"],
    ["mean", "--sweep", "x:0:1:3"],
    ["mean", "--sweep", "t:0:1"],
    ["mean", "--sweep", "t:0:1:3:log"],
    ["mean", "--sweep", "nu:0:1:3"],
    ["conditional"],
    ["conditional", "--n", "-1"],
    ["jumpback", "--k", "0"],
    ["jumpback", "--nu", "0"],
    ["simulate", "--reps", "0"],
    ["simulate", "--n", "1", "--k", "1"],
    ["simulate", "--k", "1", "--t", "0", "--reps", "10"],
    ["simulate", "--seed", "-3"],
    ["mean", "--workers", "0"],
    ["verify", "--only", "11"],
])
def test_usage_errors_exit_one(argv):
    code, out, err = run(*argv)
    assert code == 1
    assert out == ""
    assert err.startswith("error:")


def test_unwritable_output_is_usage_error(tmp_path):
    code, _, err = run("mean", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == 1 and "cannot write" in err


@pytest.mark.parametrize("argv", [
    ["mean", "--c", "1000", "--t", "1000"],
    ["moment2", "--c", "1000", "--t", "1000"],
])
def test_overflow_exits_three(argv):
    code, out, err = run(*argv)
    assert code == 3 and out == "" and err.startswith("numerical failure")


def test_bad_worker_environment(monkeypatch):
    monkeypatch.setenv("GEODESIC_COMPASS_WORKERS", "-2")
    assert run("mean")[0] == 1


def test_verify_subset_text_and_json():
    code, out, _ = run("verify", "--only", "1", "--only", "5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split()[:2] == ["[PASS]", "1"] and lines[1].split()[:2] == ["[PASS]", "5"]
    assert lines[-1] == "2/2 checks passed"
    code, out, _ = run("verify", "--only", "2", "--format", "json")
    assert code == 0 and json.loads(out)[0]["passed"] is True


def test_help_exits_zero():
    assert run("--help")[0] == 0


def test_console_module_entry_point():
    env = dict(os.environ, GEODESIC_COMPASS_WORKERS="1")
    proc = subprocess.run([sys.executable, "-m", "geodesic_compass.cli", "mean", "--t", "0"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert proc.stdout == "lambda,c,t,value\n1,1,0,1\n"
