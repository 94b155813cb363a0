import json
import subprocess
import sys

import pytest

from hetnet_policy.cli import main

SMALL = {"C": 3, "min_wifi_throughput_mbps": 6.0, "lambda_v": 0.3, "lambda_d": 0.6, "mu_v": 0.2, "mu_d": 0.5,
         "wifi": {"model": "table", "table": [[1, 30.0], [2, 16.0], [3, 10.0], [4, 7.0], [5, 5.0]]}}


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_throughput_csv(capsys):
    assert main(["throughput", "--k-max", "5"]) == 0
    out = capsys.readouterr()
    lines = out.out.splitlines()
    assert lines[0] == "k,per_user_mbps,total_mbps,increment_mbps" and len(lines) == 6
    assert "W=7" in out.err


def test_solve_writes_outputs(cfg, tmp_path):
    out = tmp_path / "solve"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["g"] == pytest.approx(diag["throughput_mbps"], rel=1e-8)
    assert (out / "policy.csv").read_text().startswith("i,j,k,event,action")
    assert (out / "values.csv").exists()


def test_evaluate_round_trip(cfg, tmp_path, capsys):
    out = tmp_path / "solve"
    main(["solve", "--config", cfg, "--out", str(out)])
    capsys.readouterr()
    assert main(["evaluate", "--config", cfg, "--policy", str(out / "policy.csv")]) == 0
    ev = json.loads(capsys.readouterr().out)
    diag = json.loads((out / "diagnostics.json").read_text())
    assert ev["throughput_mbps"] == pytest.approx(diag["throughput_mbps"], rel=1e-14)


def test_solve_cmdp_binding_and_infeasible(cfg, tmp_path):
    out = tmp_path / "cmdp"
    assert main(["solve-cmdp", "--config", cfg, "--b-max", "0.3", "--out", str(out)]) == 0
    d = json.loads((out / "diagnostics.json").read_text())
    assert d["status"] == "binding" and d["blocking"] == pytest.approx(0.3, abs=1e-12)
    assert main(["solve-cmdp", "--config", cfg, "--b-max", "1e-4", "--out", str(out)]) == 4
    assert json.loads((out / "diagnostics.json").read_text())["status"] == "infeasible"


def test_verify_ok(cfg, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["verify", "--config", cfg, "--beta", "5", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True
    assert "reconstruction mismatches: 0" in capsys.readouterr().out


def test_verify_reports_hard_violation(cfg, tmp_path):
    # at beta = 0 this instance blocks voice at (1, 0, 0) but offloads at (1, 1, 0)
    out = tmp_path / "report.json"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 1
    assert json.loads(out.read_text())["hard_failures"] == ["voice_block_monotone"]


def test_simulate(cfg, tmp_path):
    out = tmp_path / "sim"
    rc = main(["simulate", "--config", cfg, "--policy", "on_the_spot", "--events", "5000", "--warmup", "100",
               "--replications", "3", "--out", str(out)])
    assert rc == 0
    agg = json.loads((out / "aggregate.json").read_text())
    assert agg["replications"] == 3
    assert len((out / "replications.csv").read_text().splitlines()) == 4


def test_sweep(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"base": SMALL, "grid": [0.2, 0.4]}))
    out = tmp_path / "sweep"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == 0
    assert (out / "sweep.csv").exists() and (out / "throughput_vs_lambda_v.csv").exists()


@pytest.mark.parametrize("argv", [
    ["solve", "--config", "/nonexistent.json", "--out", "x"],
    ["simulate", "--policy", "on_the_spot", "--events", "10", "--warmup", "20", "--out", "x"],
    ["solve-cmdp", "--b-max", "0", "--out", "x"],
])
def test_validation_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_bad_json_and_empty_grid(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"grid": []}))
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2


def test_solver_failure_exit_code(cfg, tmp_path, monkeypatch):
    from hetnet_policy import cli
    from hetnet_policy.solver import SolverConfig

    monkeypatch.setattr(cli, "_solver_config", lambda args: SolverConfig(via_max_iters=2))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2


def test_console_script_installed():
    out = subprocess.run([sys.executable, "-m", "hetnet_policy.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "solve-cmdp" in out.stdout
