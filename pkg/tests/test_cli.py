import json
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "beliefsynth.cli"]

FAST = ["--benchmark", "double-integrator", "--grid", "11", "11",
        "--horizon", "4", "--nbar", "2"]


def run_cli(args, **kw):
    return subprocess.run(CLI + args, capture_output=True, text=True, **kw)


class TestRun:
    def test_happy_path_artifacts(self, tmp_path):
        out = tmp_path / "bundle"
        res = run_cli(["run", *FAST, "--trials", "15", "--out", str(out)])
        assert res.returncode == 0, res.stderr
        for name in ("report.json", "values.csv", "heatmap.csv", "regions.csv",
                     "model.sta", "model.tra", "simulation.json", "manifest.json",
                     "trajectories.csv"):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert report["states"] == 3 * 121 + 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 2023
        assert "build_s" in manifest["timings"]

    def test_invalid_nbar_no_artifacts(self, tmp_path):
        out = tmp_path / "bad"
        res = run_cli(["run", *FAST[:-2], "--nbar", "9", "--out", str(out)])
        assert res.returncode == 1
        assert "nbar" in res.stderr
        assert not out.exists() or not any(out.iterdir())

    def test_invalid_theta(self, tmp_path):
        res = run_cli(["run", *FAST, "--theta", "-1", "--out", str(tmp_path / "x")])
        assert res.returncode == 1
        assert "theta" in res.stderr

    def test_unknown_benchmark(self, tmp_path):
        res = run_cli(["run", "--benchmark", "nope", "--out", str(tmp_path / "x")])
        assert res.returncode == 1

    def test_deterministic_artifacts(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            res = run_cli(["run", *FAST, "--trials", "10", "--out", str(out)])
            assert res.returncode == 0
        for name in ("report.json", "values.csv", "heatmap.csv", "regions.csv",
                     "model.sta", "model.tra", "simulation.json", "trajectories.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_reference_grid_counts(self, tmp_path):
        """Single --grid value expands per axis; counts match the reference."""
        out = tmp_path / "tab"
        res = run_cli(["run", "--benchmark", "double-integrator", "--grid", "21",
                       "--nbar", "3", "--out", str(out)])
        assert res.returncode == 0, res.stderr
        report = json.loads((out / "report.json").read_text())
        assert report["states"] == 1767
        assert report["choices"] == 8639

    def test_inline_benchmark_config(self, tmp_path):
        config = {
            "benchmark": {
                "name": "tiny",
                "A": [[1.0, 1.0], [0.0, 1.0]], "B": [[0.5], [1.0]],
                "C": [[1.0, 0.0]],
                "w_cov": [[0.25, 0.0], [0.0, 0.25]], "v_cov": [[0.25]],
                "control_lo": [-5.0], "control_hi": [5.0],
                "domain_lo": [-21.0, -21.0], "domain_hi": [21.0, 21.0],
                "sigma0": [[2.0, 0.0], [0.0, 2.0]],
                "horizon": 4, "merge": 2,
                "goal": [{"lo": [-3.0, -3.0], "hi": [3.0, 3.0]}],
            },
            "grid": [11, 11], "nbar": 2,
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "inline"
        res = run_cli(["run", "--config", str(cfg_path), "--out", str(out)])
        assert res.returncode == 0, res.stderr
        report = json.loads((out / "report.json").read_text())
        assert report["benchmark"] == "tiny"
        assert report["states"] == 3 * 121 + 3


class TestOtherVerbs:
    def test_export_prism(self, tmp_path):
        out = tmp_path / "exp"
        res = run_cli(["export-prism", *FAST, "--out", str(out)])
        assert res.returncode == 0
        assert (out / "model.sta").exists() and (out / "model.tra").exists()
        assert not (out / "simulation.json").exists()

    def test_simulate_requires_trials(self, tmp_path):
        res = run_cli(["simulate", *FAST, "--out", str(tmp_path / "s")])
        assert res.returncode == 1

    def test_simulate_verb(self, tmp_path):
        out = tmp_path / "sim"
        res = run_cli(["simulate", *FAST, "--trials", "12", "--out", str(out)])
        assert res.returncode == 0, res.stderr
        sim = json.loads((out / "simulation.json").read_text())
        assert sim["trials"] == 12
        assert 0.0 <= sim["empirical_rate"] <= 1.0
        assert not (out / "model.sta").exists()

    def test_verify_passes(self):
        res = run_cli(["verify", "--json"])
        assert res.returncode == 0, res.stdout + res.stderr
        payload = json.loads(res.stdout)
        assert all(item["passed"] for item in payload)
