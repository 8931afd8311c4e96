import csv
import json
import subprocess
import sys

import pytest

from nldiff import cli

GHEAT = {
    "control": {
        "f_interval": [1, 4],
        "b_expr": "0",
        "a_expr": "f",
        "conditions": ["convexity", "linear_growth", "lipschitz", "local_holder", "ellipticity",
                       "continuity_in_control", "zero_drift"],
    },
    "grid": {"nx": 201},
    "terminal": {"builtin": "square"},
    "mc": {"n_paths": 5000, "n_steps": 50},
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def err_line(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_solve_writes_value_and_policy(tmp_path, capsys):
    out = tmp_path / "v.csv"
    assert cli.run(["solve", "--config", write(tmp_path, GHEAT), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows[0]) == 201
    assert len(rows) == summary["n_times"] + 1
    assert (tmp_path / "v.policy.csv").exists()
    assert summary["value_at_x0"] == pytest.approx(4.0, abs=2e-2)


def test_solve_linear_and_resolution(tmp_path, capsys):
    out = tmp_path / "v.json"
    rc = cli.run(["solve", "--config", write(tmp_path, GHEAT), "--out", str(out), "--linear",
                  "--resolution", "101"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["nx"] == 101
    assert summary["sup_distance_nonlinear_linear"] <= 5e-3
    assert len(json.loads(out.read_text())["xs"]) == 101
    assert (tmp_path / "v.linear.json").exists()


def test_simulate_prints_mean_and_stderr(tmp_path, capsys):
    cfg = write(tmp_path, GHEAT)
    assert cli.run(["simulate", "--config", cfg, "--seed", "4"]) == 0
    a = json.loads(capsys.readouterr().out)
    assert abs(a["mean"] - 4.0) <= 3 * a["stderr"]
    assert cli.run(["simulate", "--config", cfg, "--seed", "4", "--threads", "2"]) == 0
    b = json.loads(capsys.readouterr().out)
    assert a == b


def test_simulate_feedback_and_constant(tmp_path, capsys):
    cfg = dict(GHEAT, mc={"n_paths": 5000, "n_steps": 50, "policy": "feedback"},
               terminal={"builtin": "neg_square"})
    assert cli.run(["simulate", "--config", write(tmp_path, cfg)]) == 0
    r = json.loads(capsys.readouterr().out)
    assert abs(r["mean"] + 1.0) <= 3 * r["stderr"] + 2.5e-2
    cfg = dict(GHEAT, mc={"n_paths": 100, "n_steps": 5, "policy": {"constant": 2.5}})
    assert cli.run(["simulate", "--config", write(tmp_path, cfg), "--out",
                    str(tmp_path / "e.csv")]) == 0
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 101


def test_verify_report_is_byte_identical(tmp_path, capsys):
    cfg = dict(GHEAT, verify={"checks": ["semigroup", "linearization_convex", "smoothing"]})
    c = write(tmp_path, cfg)
    assert cli.run(["verify", "--config", c]) == 0
    a = json.loads(capsys.readouterr().out)
    assert cli.run(["verify", "--config", c]) == 0
    b = json.loads(capsys.readouterr().out)
    a["metadata"].pop("timestamp")
    b["metadata"].pop("timestamp")
    assert a == b
    assert all(r["pass"] for r in a["records"])


def test_verify_failure_exits_one(tmp_path, capsys):
    cfg = dict(GHEAT, verify={"checks": ["semigroup"], "tolerances": {"tol_pde": 1e-300}},
               terminal={"builtin": "abs"})
    assert cli.run(["verify", "--config", write(tmp_path, cfg), "--out",
                    str(tmp_path / "r.json")]) == 1
    assert "FAIL semigroup" in capsys.readouterr().out


def test_check_spec(tmp_path, capsys):
    assert cli.run(["check-spec", "--config", write(tmp_path, GHEAT)]) == 0
    report = json.loads(capsys.readouterr().out)
    by = {c["name"]: c for c in report["conditions"]}
    assert by["linear_growth"]["estimated_constant"] == 4.0
    assert by["convexity"]["pass"] and by["convexity"]["declared"]


def test_syntax_error_exit_two(tmp_path, capsys):
    cfg = json.loads(json.dumps(GHEAT))
    cfg["control"]["a_expr"] = "2*("
    assert cli.run(["solve", "--config", write(tmp_path, cfg)]) == 2
    e = err_line(capsys)
    assert e["error"] == "SyntaxError" and e["offset"] == 3


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(extra=1),
    lambda c: c["grid"].update(nxx=3),
    lambda c: c["control"].update(f_values=[1, 2]),
    lambda c: c.update(terminal={"builtin": "cube"}),
    lambda c: c.update(verify={"checks": ["bogus"]}),
    lambda c: c["control"].update(a_expr="y"),
])
def test_config_errors_exit_two(tmp_path, capsys, mutate):
    cfg = json.loads(json.dumps(GHEAT))
    mutate(cfg)
    assert cli.run(["solve", "--config", write(tmp_path, cfg)]) == 2
    assert set(err_line(capsys)) >= {"error", "message"}


def test_missing_file_and_bad_json(tmp_path, capsys):
    assert cli.run(["solve", "--config", str(tmp_path / "none.json")]) == 2
    err_line(capsys)
    (tmp_path / "bad.json").write_text("{")
    assert cli.run(["solve", "--config", str(tmp_path / "bad.json")]) == 2
    err_line(capsys)


def test_numerical_errors_exit_three(tmp_path, capsys):
    cfg = dict(GHEAT, grid={"nx": 201, "dt_policy": {"fixed": 1.0}})
    assert cli.run(["solve", "--config", write(tmp_path, cfg)]) == 3
    assert err_line(capsys)["error"] == "UnstableStep"
    cfg = dict(GHEAT, terminal={"expr": "1/x"}, grid={"nx": 201})
    assert cli.run(["solve", "--config", write(tmp_path, cfg)]) == 3
    assert err_line(capsys)["error"] == "EvalError"


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "nldiff", "check-spec", "--config",
                        write(tmp_path, GHEAT)], capture_output=True, text=True)
    assert p.returncode == 0 and json.loads(p.stdout)["conditions"]


def test_usage_errors_are_json(capsys):
    assert cli.run(["solve"]) == 2
    assert err_line(capsys)["error"] == "ConfigError"
    assert cli.run(["launch", "--config", "x"]) == 2
    err_line(capsys)
