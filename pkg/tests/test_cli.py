import json
import subprocess
import sys

import pytest

from blockcg.cli import main


@pytest.fixture
def instance(tmp_path):
    path = tmp_path / "inst.json"
    assert main(["gen", "box-quadratic", "d=8", "n=16", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "box_quadratic", "d=10", "n_samples=20", "--seed", "1", "--out", str(a)]) == 0
    assert main(["gen", "box_quadratic", "d=10", "n_samples=20", "--seed", "1", "--out", str(b)]) == 0
    digests = capsys.readouterr().out.split()
    assert digests[0] == digests[1] and len(digests[0]) == 64
    assert a.read_bytes() == b.read_bytes()


def test_gen_errors(tmp_path):
    assert main(["gen", "box_quadratic", "d=0", "n_samples=20", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["gen", "box_quadratic", "d=3", "bogus=1", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["gen", "nope", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["gen", "box_quadratic", "d=3", "n=4", "--out", str(tmp_path / "missing" / "x.json")]) == 3


def test_solve_zero_iterations(instance, tmp_path):
    out = tmp_path / "t.json"
    assert main(["solve", str(instance), "--iters", "0", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["iterations"]) == 1


def test_solve_is_reproducible(instance, tmp_path):
    args = ["solve", str(instance), "--scheduler", "permutation", "--iters", "15", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_solve_gap_tolerance(tmp_path):
    inst = tmp_path / "s.json"
    main(["gen", "simplex_product", "N_examples=10", "M_classes=4", "d_features=8", "lam=1.0", "--out", str(inst)])
    out = tmp_path / "t.json"
    assert main(["solve", str(inst), "--tol", "1e-6", "--iters", "500", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["iterations"][-1]["S"] <= 1e-6 and len(doc["iterations"]) < 501
    assert doc["metadata"]["status"] == "converged"


def test_solve_corrupt_instance(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "blockcg-instance", "m": 2,, }')
    assert main(["solve", str(bad)]) == 3
    assert "byte offset 38" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "absent.json")]) == 3


def test_solve_with_config_file(instance, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"scheduler": "cyclic", "stepsize": "backtracking", "beta-init": 0.5, "iters": 3}))
    out = tmp_path / "t.json"
    assert main(["solve", str(instance), "--config", str(conf), "--iters", "2", "--out", str(out)]) == 0
    cfg = json.loads(out.read_text())["metadata"]["config"]
    assert cfg["stepsize"] == "backtracking" and cfg["beta_init"] == 0.5 and cfg["max_outer_iterations"] == 2
    conf.write_text(json.dumps({"colour": "blue"}))
    assert main(["solve", str(instance), "--config", str(conf)]) == 2
    assert main(["solve", str(instance), "--scheduler", "spiral"]) == 2


@pytest.mark.parametrize("stepsize", ["predefined", "adaptive", "backtracking"])
def test_verify_passes(instance, tmp_path, stepsize):
    trace = tmp_path / "t.json"
    main(["solve", str(instance), "--stepsize", stepsize, "--iters", "50", "--out", str(trace)])
    report = tmp_path / "r.json"
    assert main(["verify", str(instance), str(trace), "--out", str(report)]) == 0
    assert json.loads(report.read_text())["passed"] is True


def test_verify_rule_mismatch_and_violation(instance, tmp_path):
    trace = tmp_path / "t.json"
    main(["solve", str(instance), "--stepsize", "adaptive", "--iters", "10", "--out", str(trace)])
    assert main(["verify", str(instance), str(trace), "--rule", "predefined"]) == 2
    assert main(["verify", str(instance), str(trace), "--h-star=-1e9"]) == 1


def test_estimate_opt(instance, tmp_path):
    out = tmp_path / "e.json"
    assert main(["estimate-opt", str(instance), "--iters", "100", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["lower_bound"] <= doc["H_star_est"]


def test_bench_command(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"params": {"d": 5, "n_samples": 8}, "estimate_iterations": 20}))
    out = tmp_path / "bench"
    assert main(["bench", str(spec), "--instances", "2", "--iters", "3", "--workers", "2", "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text().startswith("method,k,q02,")
    assert main(["bench", "--instances", "0", "--out", str(out)]) == 2


def test_log_level_env(instance, monkeypatch):
    monkeypatch.setenv("BLOCKCG_LOG", "loud")
    assert main(["estimate-opt", str(instance), "--iters", "1"]) == 2


def test_usage_error_exit_code():
    assert main([]) == 2
    assert main(["solve"]) == 2


def test_console_script(instance):
    res = subprocess.run(
        [sys.executable, "-m", "blockcg.cli", "estimate-opt", str(instance), "--iters", "5"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0 and "H_star_est" in res.stdout
