import json
import math

import numpy as np
import pytest

from neuronmf.cli import main


def write_cfg(tmp_path, name, obj):
    p = tmp_path / name
    with open(p, "w") as fh:
        json.dump(obj, fh)
    return str(p)


SYSTEM = {
    "n": 50,
    "lambda": 1.0,
    "rate": {"kind": "power", "c": 1.0, "xi": 2.0},
    "initial": {"kind": "exponential", "rate": 1.0},
    "horizon": 1.0,
    "seed": 42,
}


class TestConfigErrors:
    def test_missing_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_command_mismatch(self, tmp_path):
        cfg = write_cfg(tmp_path, "c.json", {"command": "invariant", "system": SYSTEM})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_bad_rate_kind(self, tmp_path):
        bad = dict(SYSTEM, rate={"kind": "cubic"})
        cfg = write_cfg(tmp_path, "c.json", {"command": "simulate", "system": bad, "snapshot_times": []})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_short_n_grid(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            "c.json",
            {"command": "chaos", "system": SYSTEM, "snapshot_times": [0.5], "n_grid": [10, 20], "replicates": 2},
        )
        assert main(["chaos", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_zero_replicates(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            "c.json",
            {"command": "chaos", "system": SYSTEM, "snapshot_times": [0.5], "n_grid": [10, 20, 40], "replicates": 0},
        )
        assert main(["chaos", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_budget_exceeded_exit_code(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            "c.json",
            {"command": "simulate", "system": SYSTEM, "snapshot_times": [1.0], "event_budget": 1},
        )
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


class TestSimulateCommand:
    def test_runs_and_writes(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(
            tmp_path,
            "c.json",
            {"command": "simulate", "system": SYSTEM, "snapshot_times": [0.0, 0.5, 1.0], "write_events": True},
        )
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "bound_report.json").read_text())
        assert report["ok"] is True and report["spikes"] > 0
        lines = (out / "snapshots.csv").read_text().splitlines()
        assert lines[0] == "replicate,time,particle_rank,value"
        assert len(lines) == 1 + 3 * SYSTEM["n"]
        assert (out / "events.csv").exists()

    def test_empty_snapshots_only_report(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, "c.json", {"command": "simulate", "system": SYSTEM, "snapshot_times": []})
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert len((out / "snapshots.csv").read_text().splitlines()) == 1

    def test_all_zero_run(self, tmp_path):
        out = tmp_path / "out"
        sys0 = dict(SYSTEM, n=1, initial={"kind": "point_mass", "x0": 0.0})
        cfg = write_cfg(tmp_path, "c.json", {"command": "simulate", "system": sys0, "snapshot_times": [1.0]})
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "bound_report.json").read_text())
        assert report["spikes"] == 0

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_cfg(
            tmp_path, "c.json", {"command": "simulate", "system": SYSTEM, "snapshot_times": [0.5, 1.0]}
        )
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "snapshots.csv").read_bytes() == (tmp_path / "b" / "snapshots.csv").read_bytes()


class TestInvariantCommand:
    def test_linear_lam0(self, tmp_path):
        out = tmp_path / "out"
        sys0 = {"lambda": 0.0, "rate": {"kind": "power", "c": 1.0, "xi": 1.0},
                "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 1.0, "seed": 1}
        cfg = write_cfg(tmp_path, "c.json", {"command": "invariant", "system": sys0})
        assert main(["invariant", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "invariant.json").read_text())
        assert summary["p"] == pytest.approx(2 / math.pi, abs=1e-6)
        assert (out / "invariant_density.csv").exists()

    def test_linear_lam1(self, tmp_path):
        out = tmp_path / "out"
        sys1 = {"lambda": 1.0, "rate": {"kind": "power", "c": 1.0, "xi": 1.0},
                "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 1.0, "seed": 1}
        cfg = write_cfg(tmp_path, "c.json", {"command": "invariant", "system": sys1})
        assert main(["invariant", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "invariant.json").read_text())
        assert 1.0 < summary["a_star"] < 2.0

    def test_invalid_rate_exit_2(self, tmp_path):
        sys_bad = {"lambda": 0.0, "rate": {"kind": "polynomial", "coeffs": [-1.0]},
                   "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 1.0, "seed": 1}
        cfg = write_cfg(tmp_path, "c.json", {"command": "invariant", "system": sys_bad})
        assert main(["invariant", "--config", cfg, "--out", str(tmp_path)]) == 2


class TestSolveLimitCommand:
    def test_runs_and_checks(self, tmp_path):
        out = tmp_path / "out"
        sys0 = dict(SYSTEM, n=1, horizon=2.0)
        cfg = write_cfg(
            tmp_path, "c.json", {"command": "solve-limit", "system": sys0, "snapshot_times": [0.5, 1.0, 2.0]}
        )
        assert main(["solve-limit", "--config", cfg, "--out", str(out)]) == 0
        series = (out / "series.csv").read_text().splitlines()
        assert series[0] == "time,a,p,m"
        report = json.loads((out / "limit_report.json").read_text())
        assert report["ok"] is True
        assert len(report["snapshots"]) == 3
        assert (out / "density_000.csv").exists()

    def test_delta0_trivial(self, tmp_path):
        out = tmp_path / "out"
        sys0 = dict(SYSTEM, n=1, initial={"kind": "point_mass", "x0": 0.0})
        cfg = write_cfg(tmp_path, "c.json", {"command": "solve-limit", "system": sys0, "snapshot_times": [1.0]})
        assert main(["solve-limit", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "series.csv").read_text().splitlines()[1:]
        assert all(float(r.split(",")[1]) == 0.0 for r in rows)


class TestEquilibriumCommand:
    def test_non_extinction_lam1(self, tmp_path):
        out = tmp_path / "out"
        sys1 = dict(SYSTEM, n=1, horizon=5.0)
        sys1["tolerances"] = {"dt": 0.01}
        cfg = write_cfg(
            tmp_path, "c.json",
            {"command": "equilibrium", "system": sys1, "time_grid": [1.0, 2.5, 5.0], "floor": 0.01},
        )
        assert main(["equilibrium", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "equilibrium_report.json").read_text())
        assert report["mode"] == "non_extinction"
        assert report["inf_a_after_1"] > 0.01

    def test_tv_decay_lam0(self, tmp_path):
        out = tmp_path / "out"
        sys0 = {"n": 1, "lambda": 0.0, "rate": {"kind": "power", "c": 1.0, "xi": 1.0},
                "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 6.0, "seed": 1,
                "tolerances": {"dt": 0.01}}
        cfg = write_cfg(
            tmp_path, "c.json",
            {"command": "equilibrium", "system": sys0, "time_grid": [0.0, 1.0, 2.0, 4.0, 6.0]},
        )
        assert main(["equilibrium", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "equilibrium_report.json").read_text())
        assert report["mode"] == "tv_decay" and report["monotone_after_1"] is True
        tvs = [float(v) for v in report["tv"].values()]
        assert tvs[0] > tvs[-1]


class TestChaosCommand:
    def test_small_grid_report(self, tmp_path):
        out = tmp_path / "out"
        sys0 = {"lambda": 0.0, "rate": {"kind": "power", "c": 1.0, "xi": 2.0},
                "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 1.0, "seed": 99}
        cfg = write_cfg(
            tmp_path, "c.json",
            {"command": "chaos", "system": sys0, "snapshot_times": [0.5, 1.0],
             "n_grid": [10, 20, 40], "replicates": 4, "slope_band": [-1.5, 0.5], "r_squared_min": 0.0},
        )
        assert main(["chaos", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "chaos_report.json").read_text())
        assert set(report["per_n"]) == {"10", "20", "40"}
        assert all(k in report["slopes"] for k in ["mean_abs_diff", "mean_h_diff", "w1"])
        curve = (out / "chaos_curve.csv").read_text().splitlines()
        assert curve[0] == "n,sup_mean_abs_diff,sup_mean_h_diff,sup_w1"

    def test_threads_do_not_change_bytes(self, tmp_path):
        sys0 = {"lambda": 0.0, "rate": {"kind": "power", "c": 1.0, "xi": 2.0},
                "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 1.0, "seed": 7}
        body = {"command": "chaos", "system": sys0, "snapshot_times": [0.5, 1.0],
                "n_grid": [10, 20, 40], "replicates": 4, "slope_band": [-1.5, 0.5], "r_squared_min": 0.0}
        cfg = write_cfg(tmp_path, "c.json", body)
        main(["chaos", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
        main(["chaos", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"])
        assert (tmp_path / "a" / "chaos_report.json").read_bytes() == (tmp_path / "b" / "chaos_report.json").read_bytes()
        assert (tmp_path / "a" / "chaos_curve.csv").read_bytes() == (tmp_path / "b" / "chaos_curve.csv").read_bytes()

    def test_seed_override_changes_results(self, tmp_path):
        sys0 = {"lambda": 0.0, "rate": {"kind": "power", "c": 1.0, "xi": 2.0},
                "initial": {"kind": "exponential", "rate": 1.0}, "horizon": 1.0, "seed": 7}
        body = {"command": "chaos", "system": sys0, "snapshot_times": [0.5],
                "n_grid": [10, 20, 40], "replicates": 2, "slope_band": [-9, 9], "r_squared_min": 0.0}
        cfg = write_cfg(tmp_path, "c.json", body)
        main(["chaos", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["chaos", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "8"])
        ra = json.loads((tmp_path / "a" / "chaos_report.json").read_text())
        rb = json.loads((tmp_path / "b" / "chaos_report.json").read_text())
        assert ra["per_n"] != rb["per_n"]
