"""Tests for the command-line interface (in-process via ``main``)."""

import json
import subprocess
import sys

import numpy as np
import pytest

from se3obs.cli import main
from se3obs.simulate import CSV_HEADER


def write_config(path, **overrides):
    config = {"duration": 0.5, "dt": 1e-3}
    config.update(overrides)
    path.write_text(json.dumps(config))
    return str(path)


class TestRunCommand:
    def test_writes_csv_and_summary(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", observer="vasconcelos", seed=4)
        out = tmp_path / "trace.csv"
        code = main(["run", "--config", cfg, "--out", str(out)])
        captured = capsys.readouterr()
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 502
        assert "final d(E)" in captured.out
        assert "lyapunov violations : 0" in captured.out
        assert "observable" in captured.out
        assert "max |p|" in captured.out and "max cond(X)" in captured.out

    def test_plot_writes_svg_next_to_csv(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        out = tmp_path / "trace.csv"
        code = main(["run", "--config", cfg, "--out", str(out), "--plot"])
        assert code == 0
        svg = tmp_path / "trace.svg"
        assert svg.exists()
        assert "<svg" in svg.read_text()[:500]

    def test_aborted_run_exits_nonzero(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", noise_std=1e300)
        out = tmp_path / "trace.csv"
        code = main(["run", "--config", cfg, "--out", str(out)])
        captured = capsys.readouterr()
        assert code == 1
        assert "ABORTED" in captured.err
        assert out.exists()  # the truncated trace is still written

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(
            ["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "t.csv")]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"landmark": []}))
        code = main(["run", "--config", str(path), "--out", str(tmp_path / "t.csv")])
        assert code == 2
        assert "unknown config" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        code = main(["run", "--config", str(path), "--out", str(tmp_path / "t.csv")])
        assert code == 2


class TestCheckCommand:
    def test_default_scenario_passes(self, capsys):
        code = main(["check"])
        captured = capsys.readouterr()
        assert code == 0
        assert captured.out.count("[PASS]") == 4
        assert "[FAIL]" not in captured.out
        assert "observability" in captured.out

    def test_collinear_scene_fails(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            landmarks=[[0, 0, 0], [1, 0, 0], [2, 0, 0]],
        )
        code = main(["check", "--config", cfg])
        captured = capsys.readouterr()
        assert code == 1
        assert "[FAIL] observability" in captured.out
        assert "[FAIL] cost positivity" in captured.out

    def test_bad_gain_fails(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", gains={"k_w": -1.0})
        code = main(["check", "--config", cfg])
        captured = capsys.readouterr()
        assert code == 1
        assert "[FAIL] gains" in captured.out


class TestLemmasCommand:
    def test_identities_pass(self, capsys):
        code = main(["lemmas", "--samples", "60"])
        captured = capsys.readouterr()
        assert code == 0
        assert captured.out.count("[PASS]") == 3
        assert "shift-invariance" in captured.out
        assert "analytic gradient" in captured.out
        assert "closed-form rates" in captured.out


class TestAutonomyCommand:
    def test_translation_group_reports_zero(self, capsys):
        code = main(["autonomy", "--group", "r3"])
        captured = capsys.readouterr()
        assert code == 0
        assert "[PASS] translation-group autonomy" in captured.out
        assert "0.000e+00" in captured.out

    def test_pose_group_reports_dependence(self, capsys):
        code = main(["autonomy", "--group", "se3"])
        captured = capsys.readouterr()
        assert code == 0
        assert "[PASS] pose-group base dependence" in captured.out

    def test_group_flag_required(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["autonomy"])
        assert excinfo.value.code == 2


class TestLinearizeCommand:
    def test_both_flavors_pass(self, capsys):
        code = main(["linearize"])
        captured = capsys.readouterr()
        assert code == 0
        assert captured.out.count("[PASS]") == 6
        assert "jacobian at identity" in captured.out
        assert "spectrum at representative pose" in captured.out


class TestSweepCommand:
    def test_small_sweep_passes(self, capsys):
        code = main(["sweep", "--seeds", "2"])
        captured = capsys.readouterr()
        assert code == 0
        assert "[PASS] sweep convergence" in captured.out
        assert "[PASS] rate spread" in captured.out
        assert captured.out.count("seed ") == 2


class TestParser:
    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["explode"])
        assert excinfo.value.code == 2

    def test_help_exits_cleanly(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["--help"])
        assert excinfo.value.code == 0

    def test_module_invocation(self):
        result = subprocess.run(
            [sys.executable, "-m", "se3obs.cli", "check"],
            capture_output=True, text=True, timeout=300,
        )
        assert result.returncode == 0
        assert "[PASS]" in result.stdout
