import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from palm import metrics
from palm.datastreams import DatasetError, gen_mackey_glass, gen_nonlinear_sysid, load_real_world
from palm.engine import ModelConfig
from palm.metrics import (
    MetricError,
    MetricReport,
    SweepError,
    compute_metrics,
    config_for,
    experiment_suite,
    format_sweep,
    load_hyperparameters,
    run_experiment,
    sensitivity_sweep,
    write_outputs,
)


class TestComputeMetrics:
    def test_perfect(self):
        m = compute_metrics([1.0, 2.0, 5.0], [1.0, 2.0, 5.0])
        assert (m.mse, m.rmse, m.ndei, m.nrmse) == (0.0, 0.0, 0.0, 0.0)

    def test_hand_example(self):
        m = compute_metrics([0.0, 0.0], [0.0, 2.0])
        assert m.mse == 2.0
        assert m.rmse == pytest.approx(math.sqrt(2), abs=1e-15)
        assert m.target_std == 1.0
        assert m.ndei == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_population_std(self):
        # population std of [0, 2] is 1; NDEI = RMSE / 1
        m = compute_metrics([0.0, 2.0 - math.sqrt(2)], [0.0, 2.0])
        assert m.ndei == pytest.approx(m.rmse, abs=1e-15)

    def test_nrmse_divides_by_std(self):
        m = compute_metrics([0.0, 0.0, 0.0], [0.0, 0.0, 3.0])
        assert m.nrmse == pytest.approx(math.sqrt(m.mse / np.std([0.0, 0.0, 3.0])), abs=1e-15)

    def test_zero_variance(self):
        with pytest.raises(MetricError, match="zero variance"):
            compute_metrics([1.0, 2.0], [3.0, 3.0])

    @pytest.mark.parametrize("p,t", [([1.0], [1.0, 2.0]), ([], [])])
    def test_shape_errors(self, p, t):
        with pytest.raises(MetricError):
            compute_metrics(p, t)

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=50))
    def test_brute_force(self, pairs):
        p, t = map(list, zip(*pairs))
        if np.std(t) == 0:
            return
        m = compute_metrics(p, t)
        n = len(t)
        mse = sum((a - b) ** 2 for a, b in zip(t, p)) / n
        mean = sum(t) / n
        std = math.sqrt(sum((v - mean) ** 2 for v in t) / n)
        assert m.mse == pytest.approx(mse, rel=1e-12, abs=1e-300)
        assert m.ndei == pytest.approx(math.sqrt(mse) / std, rel=1e-9)
        assert m.nrmse == pytest.approx(math.sqrt(mse / std), rel=1e-9)


@pytest.fixture(scope="module")
def bj_result():
    ds = load_real_world("box-jenkins", standin=True)
    return run_experiment(ds, config_for("box-jenkins", "type2", "global"))


class TestReports:
    def test_fields(self, bj_result):
        r = bj_result.report
        assert r.train_samples == 200 and r.test_samples == 90
        assert r.param_count == 2 * r.rule_count * 3
        assert r.config["order"] == "type2"
        assert r.label == "Type-2 PALM (G)"

    def test_json_round_trip(self, bj_result):
        r = bj_result.report
        assert MetricReport.from_json(r.to_json()) == r

    def test_trace_recomputation(self, bj_result, tmp_path):
        paths = write_outputs(bj_result, tmp_path)
        with open(paths["trace"]) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["k", "y_d", "y_hat", "rule_count", "event"]
        assert len(rows) == 290
        test = rows[200:]
        y_d = np.array([float(r["y_d"]) for r in test])
        y_hat = np.array([float(r["y_hat"]) for r in test])
        rmse = math.sqrt(np.mean((y_d - y_hat) ** 2))
        assert bj_result.report.rmse == pytest.approx(rmse, rel=1e-12)
        assert bj_result.report.ndei == pytest.approx(rmse / np.std(y_d), rel=1e-12)
        assert MetricReport.from_json(paths["report"].read_text()).trace_path == "trace.csv"

    def test_plots_written(self, bj_result, tmp_path):
        paths = write_outputs(bj_result, tmp_path, stem="bj", plots=True)
        for key in ("predictions_plot", "rules_plot"):
            assert paths[key].exists() and paths[key].read_bytes()[:4] == b"\x89PNG"
        assert paths["report"].name == "bj-report.json"


class TestHyperparameters:
    def test_every_entry_validates(self):
        table = load_hyperparameters()
        names = [k for k in table if k != "version"]
        assert set(names) == {"box-jenkins", "mackey-glass", "nonlinear-sysid", "quadcopter", "helicopter", "sp500"}
        for name in names:
            for order, learning in metrics.CONFIGS:
                config_for(name, order, learning, table).validate()

    def test_specific_overrides_default(self):
        table = {"x": {"default": {"b1": 0.02, "gamma": 10.0}, "type2/global": {"gamma": 40.0}}}
        assert config_for("x", "type2", "global", table).gamma == 40.0
        assert config_for("x", "type1", "local", table).gamma == 10.0
        assert config_for("x", "type1", "local", table, b1=0.05).b1 == 0.05


class TestSweep:
    def test_empty_grid(self, bj_standin):
        assert sensitivity_sweep(bj_standin, ModelConfig(), [], []) == []

    def test_out_of_range(self, bj_standin):
        with pytest.raises(SweepError, match="0.2"):
            sensitivity_sweep(bj_standin, ModelConfig(), [0.2])

    def test_grid_shape(self, bj_standin):
        base = config_for("box-jenkins", "type2", "global")
        rows = sensitivity_sweep(bj_standin, base, [0.020, 0.022], [0.052, 0.055])
        assert [(r.b1, r.b2) for r in rows] == [(0.020, 0.052), (0.020, 0.055), (0.022, 0.052), (0.022, 0.055)]
        table = format_sweep(rows)
        assert table.splitlines()[0].split() == ["b1", "b2", "NRMSE", "NDEI", "time(s)", "rules"]
        assert len(table.splitlines()) == 5

    def test_parallel_matches_serial(self, bj_standin):
        base = config_for("box-jenkins", "type1", "local")
        serial = sensitivity_sweep(bj_standin, base, [0.01, 0.02])
        parallel = sensitivity_sweep(bj_standin, base, [0.01, 0.02], workers=2)
        assert [(r.ndei, r.rules) for r in serial] == [(r.ndei, r.rules) for r in parallel]

    def test_error_names_grid_point(self, bj_standin):
        base = ModelConfig(order="type1", learning="local", gamma=500.0)
        with pytest.raises(SweepError, match="b1=0.02"):
            sensitivity_sweep(bj_standin, base, [0.02])

    def test_rules_non_increasing_in_b1(self, bj_standin):
        base = config_for("box-jenkins", "type2", "global", gamma=10.0)
        rules = [r.rules for r in sensitivity_sweep(bj_standin, base, [0.010, 0.012, 0.014, 0.016, 0.018, 0.020],
                                                     [0.055])]
        assert all(a >= b for a, b in zip(rules, rules[1:])), rules

    def test_rules_non_decreasing_in_b2(self, bj_standin):
        base = config_for("box-jenkins", "type2", "global", gamma=10.0)
        rules = [r.rules for r in sensitivity_sweep(bj_standin, base, [0.012], [0.02, 0.03, 0.04, 0.05, 0.06])]
        assert all(a <= b for a, b in zip(rules, rules[1:])), rules


def small_loaders():
    return {
        "box-jenkins": lambda: load_real_world("box-jenkins", standin=True),
        "mackey-glass": lambda: gen_mackey_glass(train=(201, 500), test=(5001, 5060)),
        "nonlinear-sysid": lambda: gen_nonlinear_sysid(n_train=400, n_test=50),
    }


class TestSuite:
    def test_synthetic_cardinality_and_law(self, tmp_path):
        res = experiment_suite("synthetic", out_dir=tmp_path, loaders=small_loaders())
        assert res.complete and len(res.reports) == 12
        for r in res.reports:
            n = {"box-jenkins": 2, "mackey-glass": 4, "nonlinear-sysid": 2}[r.dataset.replace("-standin", "")]
            assert r.param_count == (2 if r.order == "type2" else 1) * r.rule_count * (n + 1)
        assert len(list(tmp_path.glob("*-report.json"))) == 12

    def test_missing_dataset_is_skipped(self):
        def missing():
            raise DatasetError("no file")

        loaders = {**small_loaders(), "box-jenkins": missing}
        res = experiment_suite("synthetic", loaders=loaders)
        assert res.skipped == ["box-jenkins"] and not res.complete
        assert len(res.reports) == 8

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            experiment_suite("nope")
