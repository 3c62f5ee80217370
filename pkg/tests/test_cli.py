import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gibbsperc.cli import (ConfigError, ExperimentConfig, apply_overrides, coupled_theta_hits,
                           load_config, main, validation_report)


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return main(list(argv) + ["--out", str(out)]), out


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfig:
    def test_seed_required(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({})
        assert exc.value.path == "seed"

    def test_nested_field_path(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"seed": 1, "window": {"side": "big"}})
        assert exc.value.path == "window.side"

    def test_vector_index_path(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"seed": 1, "window": {"lower": [0, "a"], "upper": [1, 1]}})
        assert exc.value.path == "window.lower[1]"

    def test_unknown_field(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"seed": 1, "sweps": 3})
        assert exc.value.path == "sweps"

    def test_subwindow_inside(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({"seed": 1, "window": {"side": 2},
                                        "subwindow": {"lower": [1, 1], "upper": [3, 3]}})
        assert exc.value.path == "subwindow"

    def test_collar_defaults_to_range(self):
        cfg = ExperimentConfig.from_dict({"seed": 1, "boundary": "plus_poisson",
                                          "window": {"side": 20}})
        assert cfg.window.collar_width == 1.0
        assert cfg.subwindow.lower == (5.0, 5.0) and cfg.subwindow.upper == (15.0, 15.0)

    def test_overrides(self):
        doc = apply_overrides({"seed": 1}, ["window.side=3", "z=[1, 2]", "out=runs/a"])
        assert doc == {"seed": 1, "window": {"side": 3}, "z": [1, 2], "out": "runs/a"}

    def test_config_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"seed": 5, "z": 2.0}))
        cfg = load_config(str(p), ["z=3"])
        assert cfg.seed == 5 and cfg.z.z_plus == 3.0

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{seed: 1")
        assert main(["sample", "--config", str(p)]) == 2


class TestSample:
    def test_tiny_activity_mostly_empty(self, tmp_path):
        code, out = run(tmp_path, "sample", "--seed", "1", "--set", "z=0.01",
                        "--set", "sweeps=100")
        assert code == 0
        stats = json.loads(read(out / "summary.json"))
        assert stats["rho_plus"]["estimate"] + stats["rho_minus"]["estimate"] < 0.1
        assert stats["rho_plus"]["stderr"] is not None

    def test_byte_identical(self, tmp_path):
        args = ["sample", "--seed", "4", "--set", "window.side=2", "--set", "sweeps=30",
                "--set", "replicas=2"]
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b), "--jobs", "2"]) == 0
        for name in sorted(os.listdir(a)):
            assert read(a / name) == read(b / name)

    def test_csv_layout(self, tmp_path):
        code, out = run(tmp_path, "sample", "--seed", "2", "--set", "window.side=2",
                        "--set", "sweeps=5", "--set", "z=2")
        lines = read(out / "sample_0000.csv").decode().splitlines()
        assert lines[0] == "species,x1,x2"
        assert all(ln[0] in "+-" for ln in lines[1:])


class TestCftp:
    def test_plus_minus_symmetry_free(self, tmp_path):
        code, out = run(tmp_path, "cftp", "--seed", "8", "--set", "z=1.0",
                        "--set", "replicas=1500")
        assert code == 0
        st = json.loads(read(out / "summary.json"))
        p, m = st["rho_plus"], st["rho_minus"]
        assert abs(p["estimate"] - m["estimate"]) < 3 * np.hypot(p["stderr"], m["stderr"])
        assert len(st["N_K"]) == 1500

    def test_replay(self, tmp_path):
        args = ["cftp", "--seed", "3", "--set", "window.side=3", "--set", "replicas=3"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("cftp_0000.csv", "cftp_0002.csv", "summary.json", "run.json"):
            assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)

    def test_non_coalescence_exit(self, tmp_path):
        code, out = run(tmp_path, "cftp", "--seed", "1", "--set", "window.side=6",
                        "--set", "z=6", "--set", "schedule.max_steps=4")
        assert code == 4
        assert json.loads(read(out / "summary.json"))["non_coalesced"]


class TestSweep:
    def test_single_value_rejected(self, tmp_path):
        code, _ = run(tmp_path, "sweep", "--seed", "1", "--set", "grid.parameter=z",
                      "--set", "grid.values=[1.0]")
        assert code == 2

    def test_density_rows(self, tmp_path):
        code, out = run(tmp_path, "sweep", "--seed", "1", "--set", "grid.parameter=z",
                        "--set", "grid.values=[0.5, 2.0]", "--set", "replicas=200")
        assert code == 0
        rows = read(out / "sweep.csv").decode().splitlines()
        assert rows[0] == "parameter,estimate,stderr"
        vals = [tuple(map(float, r.split(","))) for r in rows[1:]]
        assert [v[0] for v in vals] == [0.5, 2.0]
        assert vals[1][1] > vals[0][1]

    def test_coupled_trials_monotone(self):
        cfg = ExperimentConfig.from_dict({"seed": 2, "command": "sweep", "trials": 300,
                                          "grid": {"parameter": "p_b", "values": [0.2, 0.5, 0.8]},
                                          "percolation": {"L": 12, "p_s": 0.9}})
        hits = coupled_theta_hits(cfg, "p_b", [0.2, 0.5, 0.8])
        assert np.all(hits[:, 0] <= hits[:, 1]) and np.all(hits[:, 1] <= hits[:, 2])


class TestValidate:
    def test_default_passes(self):
        rep = validation_report(n_samples=20_000)
        assert rep["passed"]
        assert all(c["error"] <= 1e-12 for c in rep["checks"] if "error" in c)

    def test_injected_wrong_p_fails(self, tmp_path):
        code, out = run(tmp_path, "validate", "--inject-wrong-p",
                        "--set", "validate.chisquare_samples=20000")
        assert code == 3
        assert not json.loads(read(out / "validate.json"))["passed"]


class TestPercolation:
    def test_lattice(self, tmp_path):
        code, out = run(tmp_path, "percolation", "--seed", "1", "--set", "trials=200",
                        "--set", "percolation.p_s=1.0", "--set", "percolation.p_b=1.0",
                        "--set", "percolation.L=8")
        assert code == 0
        assert json.loads(read(out / "percolation.json"))["theta"]["estimate"] == 1.0

    def test_continuum(self, tmp_path):
        code, out = run(tmp_path, "percolation", "--seed", "1", "--set", "percolation.model=continuum",
                        "--set", "window.side=10", "--set", "z=0.05", "--set", "trials=10")
        assert code == 0
        res = json.loads(read(out / "percolation.json"))
        assert res["theta"]["estimate"] < 0.05 and res["theta"]["stderr"] is not None


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gibbsperc", "sample", "--set", "seed=1",
                           "--set", "sweeps=2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "summary.json").exists()
