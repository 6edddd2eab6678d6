import json
import math

import numpy as np
import pytest

from epiou import io
from epiou.cli import main
from epiou.censored import threshold_series
from epiou.epi import SisParams, simulate_ctmc_sis, sis_to_canonical
from epiou.ou import from_canonical, sample_exact


def _run(argv):
    return main(argv)


class TestSimulate:
    def test_sis_reference_invocation(self, tmp_path):
        out = tmp_path / "run"
        code = _run(
            ["simulate", "--model", "sis", "--r0", "1.5", "--sigma", "1000", "--gamma", "1",
             "--tend", "50", "--seed", "7", "--out", str(out)]
        )
        assert code == 0
        traj, meta = io.read_trajectory(out / "trajectory.csv")
        assert meta["model"] == "sis"
        assert (out / "manifest.json").exists()
        manifest = io.read_json(out / "manifest.json")
        assert manifest["seed"] == 7
        assert "trajectory.csv" in manifest["outputs"]

    def test_ou_model(self, tmp_path):
        out = tmp_path / "run"
        code = _run(
            ["simulate", "--model", "ou", "--k", "1.0", "--mu", "1.0", "--sigma", "1.0",
             "--x0", "0.0", "--h", "0.5", "--n", "20", "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        traj, _ = io.read_trajectory(out / "trajectory.csv")
        assert len(traj) == 21
        assert traj.h == 0.5

    def test_sise_with_events(self, tmp_path):
        out = tmp_path / "run"
        code = _run(
            ["simulate", "--model", "sise", "--r0", "1.1", "--sigma", "500", "--gamma", "0.1",
             "--rho", "0.44", "--tend", "30", "--seed", "5", "--events", "--out", str(out)]
        )
        assert code == 0
        assert (out / "events.csv").exists()
        assert (out / "events.csv").read_text().splitlines()[0] == "t,i_count,phi"

    def test_missing_required_flag_exits_2(self, tmp_path):
        assert _run(["simulate", "--model", "sis", "--out", str(tmp_path)]) == 2

    def test_byte_identical_reruns(self, tmp_path):
        argv = ["simulate", "--model", "sis", "--r0", "1.4", "--sigma", "400", "--gamma", "0.5",
                "--tend", "25", "--seed", "11"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert _run(argv + ["--out", str(out_a)]) == 0
        assert _run(argv + ["--out", str(out_b)]) == 0
        assert (out_a / "trajectory.csv").read_bytes() == (out_b / "trajectory.csv").read_bytes()


class TestFit:
    def test_report_with_sis_map(self, tmp_path, capsys):
        u = sis_to_canonical(SisParams(0.15, 0.1, 1000), h=1.0)
        traj = sample_exact(from_canonical(u), u.alpha, 1.0, 2000, seed=2)
        io.write_trajectory(tmp_path / "traj.csv", traj)
        code = _run(["fit", "--input", str(tmp_path / "traj.csv"), "--map", "sis"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert abs(report["beta_hat"] - u.beta) < 4 * report["sd_beta"]
        assert "sis" in report and report["sis"]["r0"] > 1.0

    def test_unreadable_file_exits_1(self, tmp_path):
        assert _run(["fit", "--input", str(tmp_path / "nope.csv")]) == 1

    def test_short_file_surfaces_estimator_error(self, tmp_path, capsys):
        io.write_trajectory(tmp_path / "short.csv", sample_exact(
            from_canonical(sis_to_canonical(SisParams(0.15, 0.1, 1000), 1.0)),
            300.0, 1.0, 2, seed=1))
        code = _run(["fit", "--input", str(tmp_path / "short.csv")])
        assert code == 2
        assert "transition pairs" in capsys.readouterr().err


class TestGrid:
    def _fullstate_data(self, tmp_path):
        p = SisParams(beta_tx=1.5, gamma_rec=1.0, sigma_pop=1000)
        path = simulate_ctmc_sis(p, i0=333, t_end=60.0, seed=4)
        traj = path.sample(1.0)
        data = tmp_path / "data.csv"
        io.write_trajectory(data, traj)
        return data

    def test_fullstate_grid(self, tmp_path):
        data = self._fullstate_data(tmp_path)
        config = {
            "kind": "fullstate",
            "data": str(data),
            "sigma_pop": 1000,
            "axis1": {"name": "r0", "min": 1.2, "max": 1.9, "num": 8},
            "axis2": {"name": "gamma_rec", "min": 0.6, "max": 1.4, "num": 7},
        }
        cfg = tmp_path / "grid.json"
        io.write_json(cfg, config)
        out = tmp_path / "out"
        assert _run(["grid", "--config", str(cfg), "--out", str(out)]) == 0
        meta = io.read_json(out / "grid.json")
        assert meta["axis1"]["name"] == "r0"
        rows = (out / "grid.csv").read_text().splitlines()
        assert len(rows) == 8 and len(rows[0].split(",")) == 7
        marg = (out / "marginal_r0.csv").read_text().splitlines()
        masses = np.array([float(r.split(",")[1]) for r in marg[1:]])
        assert abs(masses.sum() - 1.0) < 1e-9

    def test_binary_grid_with_overlay(self, tmp_path):
        truth = SisParams(beta_tx=0.15, gamma_rec=0.1, sigma_pop=1000)
        u0 = sis_to_canonical(truth, 1.0)
        c = 0.9 * truth.i_inf
        traj = sample_exact(from_canonical(u0), u0.alpha, 1.0, 400, seed=6)
        series = threshold_series(traj, c)
        data = tmp_path / "binary.csv"
        io.write_binary_series(data, series)
        config = {
            "kind": "binary",
            "data": str(data),
            "gamma_rec": 0.1,
            "threshold": c,
            "particles": 60,
            "axis1": {"name": "r0", "min": 1.3, "max": 1.8, "num": 5},
            "axis2": {"name": "sigma_pop", "min": 700, "max": 1400, "num": 5},
            "singular_overlay": True,
            "truth": {"r0": 1.5, "sigma_pop": 1000, "gamma_rec": 0.1},
        }
        cfg = tmp_path / "grid.json"
        io.write_json(cfg, config)
        out = tmp_path / "out"
        assert _run(["grid", "--config", str(cfg), "--out", str(out)]) == 0
        curve = (out / "singular_curve.csv").read_text().splitlines()
        assert curve[0] == "r0,sigma_pop"
        assert len(curve) == 6

    def test_pseudo_grid(self, tmp_path):
        u0 = sis_to_canonical(SisParams(0.15, 0.1, 1000), 1.0)
        traj = sample_exact(from_canonical(u0), u0.alpha, 1.0, 500, seed=8)
        series = threshold_series(traj, 300.0)
        data = tmp_path / "binary.csv"
        io.write_binary_series(data, series)
        config = {
            "kind": "pseudo",
            "data": str(data),
            "beta": u0.beta,
            "p": 1,
            "axis1": {"name": "alpha", "min": 250, "max": 420, "num": 6},
            "axis2": {"name": "gamma", "min": 0.005, "max": 0.05, "num": 6},
        }
        cfg = tmp_path / "grid.json"
        io.write_json(cfg, config)
        out = tmp_path / "out"
        assert _run(["grid", "--config", str(cfg), "--out", str(out)]) == 0

    def test_empty_grid_exits_2(self, tmp_path):
        data = self._fullstate_data(tmp_path)
        config = {
            "kind": "fullstate",
            "data": str(data),
            "sigma_pop": 1000,
            "axis1": {"name": "r0", "min": 1.2, "max": 1.9, "num": 0},
            "axis2": {"name": "gamma_rec", "min": 0.6, "max": 1.4, "num": 7},
        }
        cfg = tmp_path / "grid.json"
        io.write_json(cfg, config)
        assert _run(["grid", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "grid.json"
        io.write_json(cfg, {"kind": "fullstate", "data": "x.csv", "bogus": 1})
        assert _run(["grid", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


ABC_CONFIG = {
    "kind": "sis",
    "t_end": 140.0,
    "network": {
        "n_nodes": 8,
        "median_population": 100.0,
        "n_sentinels": 4,
        "sample_period": 7.0,
        "threshold_c": 0.3,
        "init_prevalence": 0.1,
    },
    "truth": {"beta_tx": 0.16, "gamma_rec": 0.1},
    "priors": [[0.0, 1.0], [0.0, 1.0]],
    "n_particles": 24,
    "n_generations": 2,
    "eps0": 100.0,
    "rate": 0.25,
    "seed": 3,
}


class TestAbc:
    def test_self_data_run(self, tmp_path):
        cfg = tmp_path / "abc.json"
        io.write_json(cfg, ABC_CONFIG)
        out = tmp_path / "out"
        code = _run(["abc", "--config", str(cfg), "--self-data", "--out", str(out)])
        assert code == 0
        gen = out / "generation_02.csv"
        particles, weights, distances, meta = io.read_abc_generation(gen)
        assert particles.shape == (24, 2)
        assert abs(weights.sum() - 1.0) < 1e-9
        assert np.all(distances < meta["epsilon"])
        report = io.read_json(out / "qcd_report.json")
        assert set(report) == {"beta_tx", "gamma_rec", "r0"}
        assert (out / "acceptance.log").read_text().count("generation") == 2

    def test_resume_from_generation(self, tmp_path):
        cfg = tmp_path / "abc.json"
        io.write_json(cfg, ABC_CONFIG)
        first = tmp_path / "first"
        assert _run(["abc", "--config", str(cfg), "--self-data", "--out", str(first)]) == 0
        resumed_cfg = dict(ABC_CONFIG, n_generations=3)
        cfg2 = tmp_path / "abc2.json"
        io.write_json(cfg2, resumed_cfg)
        out = tmp_path / "resumed"
        code = _run(
            ["abc", "--config", str(cfg2), "--self-data", "--out", str(out),
             "--resume", str(first / "generation_02.csv")]
        )
        assert code == 0
        assert (out / "generation_03.csv").exists()
        assert not (out / "generation_02.csv").exists()

    def test_missing_observed_exits_2(self, tmp_path):
        cfg = tmp_path / "abc.json"
        io.write_json(cfg, dict(ABC_CONFIG))
        assert _run(["abc", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert _run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "FAIL" not in out
