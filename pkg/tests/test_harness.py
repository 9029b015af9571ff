"""Experiment runner: protocol, budget accounting, reproducibility, files."""

import numpy as np
import pytest

from mfsur import persist
from mfsur.harness import (ExperimentConfig, compare_strategies, config_from_dict,
                           load_config, parse_strategy, run_audit, run_experiment,
                           strategy_curve)
from mfsur.oscillator import reference_probability_map

GRID = (1.0, 0.5, 0.2, 0.05, 0.01)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("harness")
    ref = reference_probability_map(grid_shape=(6, 6), dt=0.01, replications=40,
                                    master_seed=900)
    persist.write_reference_map(root / "ref.csv", ref)
    return root


def make_config(workdir, **kw):
    base = dict(
        out_dir=str(workdir / "out"), master_seed=31, strategy="msur",
        budget=0.2, repetitions=1, candidates_per_level=4,
        quadrature_shape=(6, 6), fidelity_grid=GRID, design_sizes=(8, 4, 2),
        pilot_shape=(3, 3), pilot_replications=8,
        reference_path=str(workdir / "ref.csv"),
        model_state_path=str(workdir / "model_state.json"))
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_strategy_parsing(self):
        assert str(parse_strategy("msur")) == "msur"
        assert parse_strategy("sl:0.05").level == 0.05
        with pytest.raises(ValueError):
            parse_strategy("single:0.05")

    def test_validation(self, workdir):
        with pytest.raises(ValueError, match="decreasing"):
            make_config(workdir, fidelity_grid=(0.5, 1.0))
        with pytest.raises(ValueError, match="nonincreasing"):
            make_config(workdir, design_sizes=(4, 8))
        with pytest.raises(ValueError, match="repetitions"):
            make_config(workdir, repetitions=0)
        with pytest.raises(ValueError, match="strategy"):
            make_config(workdir, strategy="nope")

    def test_yaml_roundtrip(self, workdir, tmp_path):
        cfg = make_config(workdir, budget=1.5)
        from mfsur.harness import dump_config
        path = tmp_path / "config.yaml"
        dump_config(cfg, path)
        again = load_config(path)
        assert again == cfg
        overridden = load_config(path, {"budget": 2.0, "seed": 77})
        assert overridden.budget == 2.0
        assert overridden.master_seed == 77

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            config_from_dict({"out_dir": "x", "master_seed": 1, "bogus": 2})


class TestRunExperiment:
    def test_missing_reference_instructs_generation(self, workdir):
        cfg = make_config(workdir, reference_path=str(workdir / "nope.csv"))
        with pytest.raises(FileNotFoundError, match="mfsur reference"):
            run_experiment(cfg)

    def test_zero_budget_keeps_initial_row_only(self, workdir):
        cfg = make_config(workdir, budget=0.0, repetitions=2,
                          out_dir=str(workdir / "zero"))
        rows = run_experiment(cfg)
        assert len(rows) == 2
        for rep, row in enumerate(rows):
            assert row[0] == 0.0 and row[5] == 0 and row[6] == rep

    def test_single_level_budget_counts(self, workdir):
        # C(0.01) = 1: budget 3 buys exactly 3 points
        cfg = make_config(workdir, strategy="sl:0.01", budget=3.0,
                          out_dir=str(workdir / "slhf"))
        rows = run_experiment(cfg)
        assert len(rows) == 4
        assert rows[-1][5] == 3
        assert rows[-1][0] == pytest.approx(3.0)
        # C(1) = 0.0298: budget 2 buys floor(2/0.0298) = 67 points
        cfg = make_config(workdir, strategy="sl:1", budget=2.0,
                          out_dir=str(workdir / "sl1"))
        rows = run_experiment(cfg)
        assert rows[-1][5] == 67
        assert rows[-1][0] <= 2.0 + 1e-9

    def test_budget_never_exceeded_and_costs_monotone(self, workdir):
        cfg = make_config(workdir, budget=0.3, out_dir=str(workdir / "msur1"))
        run_experiment(cfg)
        m = persist.read_metrics(workdir / "msur1" / "metrics.csv")
        assert np.all(np.diff(m["cost"]) > 0)
        assert m["cost"].max() <= cfg.budget + 1e-9

    def test_byte_identical_reruns(self, workdir):
        cfg1 = make_config(workdir, budget=0.15, out_dir=str(workdir / "rep1"))
        cfg2 = make_config(workdir, budget=0.15, out_dir=str(workdir / "rep2"))
        run_experiment(cfg1)
        run_experiment(cfg2)
        a = (workdir / "rep1" / "metrics.csv").read_bytes()
        b = (workdir / "rep2" / "metrics.csv").read_bytes()
        assert a == b

    def test_strategy_isolation_shares_design_and_pilot(self, workdir):
        cfg_sl = make_config(workdir, strategy="sl:0.2", budget=0.15,
                             out_dir=str(workdir / "iso_sl"))
        cfg_mf = make_config(workdir, budget=0.15, out_dir=str(workdir / "iso_mf"))
        run_experiment(cfg_sl)
        run_experiment(cfg_mf)
        a = (workdir / "iso_sl" / "design_rep0.csv").read_bytes()
        b = (workdir / "iso_mf" / "design_rep0.csv").read_bytes()
        assert a == b

    def test_metrics_schema_and_errors_nonnegative(self, workdir):
        m = persist.read_metrics(workdir / "msur1" / "metrics.csv")
        assert np.all(m["sqerr_P"] >= 0)
        assert np.all(m["ise_p"] >= 0)
        assert np.all(m["H"] >= 0)
        assert set(m["strategy"]) == {"msur"}


class TestCompare:
    def test_compare_writes_curves_and_summary(self, workdir):
        out = workdir / "cmp"
        base = make_config(workdir, budget=0.15, repetitions=2, out_dir=str(out))
        from dataclasses import replace
        configs = [replace(base, strategy=s) for s in ("msur", "sl:1", "sl:0.2")]
        summary = compare_strategies(configs)
        strategies = {row[0] for row in summary}
        assert strategies == {"msur", "sl:1", "sl:0.2"}
        best_flags = [row[3] for row in summary if row[0].startswith("sl:")]
        assert sum(best_flags) == 1
        curves = persist.read_table(out / "curves.csv", persist.CURVE_COLUMNS)
        assert len(curves) > 0
        assert (out / "sl_1" / "metrics.csv").exists()

    def test_compare_rejects_mismatched_configs(self, workdir):
        base = make_config(workdir, out_dir=str(workdir / "cmp2"))
        from dataclasses import replace
        with pytest.raises(ValueError, match="share"):
            compare_strategies([base, replace(base, budget=9.0, strategy="sl:1")])

    def test_strategy_curve_step_interpolation(self):
        metrics = {
            "rep": np.array([0, 0, 0, 1, 1]),
            "cost": np.array([0.0, 1.0, 2.0, 0.0, 1.5]),
            "sqerr_P": np.array([4.0, 1.0, 0.25, 9.0, 1.0]),
            "ise_p": np.array([4.0, 1.0, 0.25, 9.0, 1.0]),
        }
        grid, rmse_p, rmse_field = strategy_curve(metrics)
        assert grid.tolist() == [0.0, 1.0, 1.5, 2.0]
        # at cost 1.0: rep0 holds 1.0, rep1 still holds 9.0
        assert rmse_p[1] == pytest.approx(np.sqrt((1.0 + 9.0) / 2))
        # at cost 2.0: rep0 0.25, rep1 holds 1.0
        assert rmse_p[3] == pytest.approx(np.sqrt((0.25 + 1.0) / 2))


class TestAudit:
    def test_audit_dump_and_criterion_bounds(self, workdir):
        cfg = make_config(workdir, budget=0.2, out_dir=str(workdir / "audit"))
        path = run_audit(cfg, iterations=2)
        rows = persist.read_table(path, persist.AUDIT_COLUMNS)
        arr = np.array([[float(v) for v in row] for row in rows])
        iters, levels, j, gain = arr[:, 0], arr[:, 1], arr[:, 5], arr[:, 6]
        assert set(iters) == {0.0, 1.0}
        assert set(np.round(levels, 9)) == set(GRID)
        assert np.all(gain >= -1e-10)
        assert np.all(j >= -1e-10)
        # within one iteration H = J + gain is a constant across all rows
        for it in (0.0, 1.0):
            h = j[iters == it] + gain[iters == it]
            assert np.ptp(h) <= 1e-9 * max(1.0, h.max())
