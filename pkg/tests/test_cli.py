import json
import subprocess
import sys

import pytest

from spinsqueeze.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main


def test_verify_quick(capsys):
    assert main(["verify", "--quick"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 8


def test_trace_writes_outputs(tmp_path, capsys):
    rc = main(["trace", "--scheme", "free-oat", "--n-s", "30", "--out-dir", str(tmp_path), "--tag", "t"])
    assert rc == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["bracketed"] and 0 < summary["xi2_min"] < 1
    assert (tmp_path / "t.csv").exists() and (tmp_path / "t.json").exists()


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scheme": "free-oat", "n_s": 8, "samples": 40}))
    assert main(["trace", "--config", str(cfg), "--n-s", "12"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["predicted_xi2_min"] == pytest.approx(0.5 * 4 ** (-2 / 3))


def test_scaling_and_noise_and_husimi(capsys):
    assert main(["scaling", "--scheme", "free-oat", "--n-s", "10", "--values", "10,20,40,80"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["fit_xi2"]["exponent"] < 0
    assert main(["noise", "--scheme", "echo", "--n-s", "4", "--n-j", "200", "--trajectories", "2",
                 "--grid", "0,0"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["cells"][0]["xi2_min_std"] == 0
    assert main(["husimi", "--n-s", "6", "--times", "0,0.5", "--n-theta", "16", "--n-phi", "32"]) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)) == 2


@pytest.mark.parametrize("argv", [
    ["trace", "--scheme", "bogus"],
    ["trace", "--n-s", "-3"],
    ["trace", "--config", "/nonexistent/file.json"],
    ["noise", "--scheme", "free-oat", "--grid", "1e-4,0"],
    ["noise", "--scheme", "echo", "--grid", "1,2,3"],
    ["trace", "--j-window", "wide"],
    [],
])
def test_config_errors(argv):
    assert main(argv) == EXIT_CONFIG


def test_budget_refusal(capsys):
    rc = main(["trace", "--scheme", "free-int", "--n-s", "50", "--n-j", "20000", "--j-window", "full",
               "--memory-budget-gib", "0.001"])
    assert rc == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


def test_numerical_failure(capsys):
    # a J window far too small for the dynamics trips the truncation monitor
    rc = main(["trace", "--scheme", "free-int", "--n-s", "6", "--n-j", "200", "--j-window", "4"])
    assert rc == EXIT_NUMERICAL
    assert "TruncationError" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "spinsqueeze", "verify", "--quick"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
