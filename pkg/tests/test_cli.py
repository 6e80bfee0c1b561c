"""Command-line behavior: verbs, overrides, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from uwbnav.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main


def run_cli(*argv):
    return main(list(argv))


class TestSimulateVerb:
    def test_writes_dataset(self, tmp_path, capsys):
        out = tmp_path / "ds"
        code = run_cli("simulate", "--out", str(out), "--seed", "3")
        assert code == EXIT_OK
        for name in ("truth.csv", "imu.csv", "anchors.csv", "tdoa.csv"):
            assert (out / name).exists()
        assert "dataset" in capsys.readouterr().out

    def test_toa_topology_rejected(self, tmp_path, capsys):
        code = run_cli("simulate", "--out", str(tmp_path / "ds"), "--topology", "toa")
        assert code == EXIT_CONFIG
        assert "tdoa" in capsys.readouterr().err

    def test_config_file_short_run(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("duration: 1.0\nrate: 50.0\n")
        out = tmp_path / "ds"
        assert run_cli("simulate", "--config", str(cfg), "--out", str(out)) == EXIT_OK
        rows = (out / "truth.csv").read_text().splitlines()
        assert len(rows) == 52


class TestRunVerb:
    @pytest.fixture
    def quick(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("duration: 1.0\ntopology: toa\n")
        return cfg

    def test_run_writes_artifacts(self, quick, tmp_path, capsys):
        out = tmp_path / "r"
        assert run_cli("run", "--config", str(quick), "--out", str(out)) == EXIT_OK
        for name in ("truth.csv", "estimates.csv", "metrics.csv", "summary.json"):
            assert (out / name).exists()
        assert "final pos" in capsys.readouterr().out

    def test_flag_overrides_land_in_summary(self, quick, tmp_path):
        out = tmp_path / "r"
        code = run_cli(
            "run", "--config", str(quick), "--out", str(out),
            "--seed", "9", "--variant", "quaternion", "--topology", "tdoa-ring",
        )
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 9
        assert summary["variant"] == "quaternion"
        assert summary["topology"] == "tdoa-ring"

    def test_rate_flag_decimates(self, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("duration: 1.0\ntopology: toa\nrate: 200.0\n")
        out = tmp_path / "r"
        code = run_cli("run", "--config", str(cfg), "--out", str(out), "--rate", "50")
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["steps"] == 50

    def test_same_seed_byte_identical_metrics(self, quick, tmp_path):
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli("run", "--config", str(quick), "--out", str(out),
                           "--seed", "5") == EXIT_OK
            blobs.append((out / "metrics.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_dataset_replay(self, tmp_path):
        ds = tmp_path / "ds"
        sim_cfg = tmp_path / "sim.yaml"
        sim_cfg.write_text("duration: 2.0\nrate: 100.0\n")
        assert run_cli("simulate", "--config", str(sim_cfg), "--out", str(ds)) == EXIT_OK
        run_cfg = tmp_path / "replay.yaml"
        run_cfg.write_text(
            f"mode: dataset\ndataset_dir: {ds}\nrate: 100.0\nduration: 2.0\n"
        )
        out = tmp_path / "r"
        code = run_cli("run", "--config", str(run_cfg), "--out", str(out), "--rate", "50")
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["steps"] == 100

    def test_missing_dataset_dir_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "run.yaml"
        cfg.write_text(f"mode: dataset\ndataset_dir: {tmp_path / 'absent'}\n")
        assert run_cli("run", "--config", str(cfg)) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_incomplete_dataset_dir_is_data_error(self, tmp_path, capsys):
        empty = tmp_path / "ds"
        empty.mkdir()
        cfg = tmp_path / "run.yaml"
        cfg.write_text(f"mode: dataset\ndataset_dir: {empty}\n")
        assert run_cli("run", "--config", str(cfg)) == EXIT_DATA
        assert "truth.csv" in capsys.readouterr().err

    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("not_a_key: 1\n")
        assert run_cli("run", "--config", str(cfg)) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_runaway_gain_is_numeric_error(self, tmp_path, capsys):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("duration: 2.0\ntopology: toa\nka: 1.0e12\n")
        with np.errstate(all="ignore"):
            code = run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "r"))
        assert code == EXIT_NUMERIC
        assert "numerical failure" in capsys.readouterr().err


class TestMetricsVerb:
    def test_recompute_round_trip(self, tmp_path, capsys):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("duration: 1.0\ntopology: toa\n")
        out = tmp_path / "r"
        assert run_cli("run", "--config", str(cfg), "--out", str(out)) == EXIT_OK
        original = (out / "metrics.csv").read_text()
        assert run_cli("metrics", str(out)) == EXIT_OK
        assert "100 rows" in capsys.readouterr().out
        redone = np.loadtxt(out / "metrics.csv", delimiter=",", skiprows=1)
        first = np.loadtxt(original.splitlines()[1:], delimiter=",", ndmin=2)
        assert np.allclose(first[:, 2], redone[:, 2], atol=1e-15)

    def test_missing_run_dir(self, tmp_path, capsys):
        assert run_cli("metrics", str(tmp_path / "absent")) == EXIT_DATA
        assert "data error" in capsys.readouterr().err


class TestCheckVerb:
    def test_all_suites_pass(self, capsys):
        assert run_cli("check") == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("ok  ") == 6
        assert "FAIL" not in out


class TestConsoleScript:
    def test_entry_point_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "uwbnav.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "simulate" in proc.stdout and "metrics" in proc.stdout
