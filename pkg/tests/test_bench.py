"""Metrics, whole-trial splits, benchmark runner, learning curves."""

import numpy as np
import pytest

from it2pf.core import Channel, ParameterError, ShapeError, materialize_ticks
from it2pf.baselines import fit_lkv
from it2pf.bench import (
    Split,
    learning_curve,
    mae,
    per_trial_metrics,
    rmse,
    run_benchmark,
    split_trials,
)
from it2pf.identify import TrainConfig


def _linear_dataset(n_trials=10, n_ticks=30, seed=0):
    rng = np.random.default_rng(seed)
    t, tid, X, V, Y = [], [], [], [], []
    for j in range(n_trials):
        amp = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0, np.pi)
        for k in range(n_ticks):
            tk = k * 0.01
            x = amp * np.sin(2 * np.pi * tk + phase)
            v = amp * 2 * np.pi * np.cos(2 * np.pi * tk + phase)
            t.append(tk), tid.append(j)
            X.append([x]), V.append([v]), Y.append([3.0 * x + 2.0 * v])
    return materialize_ticks(Channel.ENVIRONMENT, 0.01, np.array(t),
                             np.array(tid), np.array(X), np.array(V),
                             np.array(Y))


class TestMetrics:
    def test_rmse_mae_scalar_oracle(self):
        # error norms 3 and 4: rmse = sqrt(12.5), mae = 3.5
        pred = np.array([[3.0], [4.0]])
        true = np.zeros((2, 1))
        assert np.isclose(rmse(pred, true), np.sqrt(12.5), rtol=1e-15)
        assert np.isclose(mae(pred, true), 3.5, rtol=1e-15)

    def test_vector_error_uses_euclidean_norm(self):
        pred = np.array([[3.0, 4.0]])
        true = np.zeros((1, 2))
        assert np.isclose(rmse(pred, true), 5.0, rtol=1e-15)
        assert np.isclose(mae(pred, true), 5.0, rtol=1e-15)

    def test_perfect_prediction_is_zero(self):
        y = np.random.default_rng(0).normal(size=(50, 2))
        assert rmse(y, y) == 0.0
        assert mae(y, y) == 0.0

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            rmse(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_one_dimensional_pair_treated_as_vector_sample(self):
        # two flat length-2 arrays are one 2-vector tick, not two scalars
        assert np.isclose(rmse([3.0, 4.0], [0.0, 0.0]), 5.0)


class TestSplit:
    def test_default_split_is_15_train_135_test(self):
        ds = _linear_dataset(n_trials=150, n_ticks=5)
        tr, te = split_trials(ds, Split(0.10, seed=0))
        assert tr.trials().shape[0] == 15
        assert te.trials().shape[0] == 135

    def test_partition_is_disjoint_and_whole_trial(self):
        ds = _linear_dataset(n_trials=20, n_ticks=5)
        tr, te = split_trials(ds, Split(0.25, seed=3))
        tr_ids = set(tr.trials().tolist())
        te_ids = set(te.trials().tolist())
        assert tr_ids.isdisjoint(te_ids)
        assert tr_ids | te_ids == set(range(20))
        assert tr.n_samples + te.n_samples == ds.n_samples

    def test_extreme_fractions_keep_one_trial_each_side(self):
        ds = _linear_dataset(n_trials=4, n_ticks=5)
        tr, te = split_trials(ds, Split(0.001, seed=0))
        assert tr.trials().shape[0] == 1
        tr, te = split_trials(ds, Split(0.999, seed=0))
        assert te.trials().shape[0] == 1

    def test_single_trial_cannot_split(self):
        ds = _linear_dataset(n_trials=1, n_ticks=5)
        with pytest.raises(ParameterError):
            split_trials(ds, Split(0.5, seed=0))

    def test_fraction_validation(self):
        with pytest.raises(ParameterError):
            Split(0.0)
        with pytest.raises(ParameterError):
            Split(1.0)

    def test_seed_controls_partition(self):
        ds = _linear_dataset(n_trials=30, n_ticks=5)
        tr_a, _ = split_trials(ds, Split(0.3, seed=1))
        tr_b, _ = split_trials(ds, Split(0.3, seed=1))
        tr_c, _ = split_trials(ds, Split(0.3, seed=2))
        assert np.array_equal(tr_a.trials(), tr_b.trials())
        assert not np.array_equal(tr_a.trials(), tr_c.trials())


class TestBenchmarkRunner:
    def test_srmse_single_trial_equals_rmse(self):
        ds = _linear_dataset(n_trials=2, n_ticks=20)
        tr, te = split_trials(ds, Split(0.5, seed=0))
        model = fit_lkv(tr)
        rows = per_trial_metrics(model, te)
        assert len(rows) == 1
        pred, _ = model.predict_batch(te.x, te.v)
        assert np.isclose(rows[0][1], rmse(pred, te.y), rtol=1e-15)

    def test_srmse_sums_per_trial_values(self):
        ds = _linear_dataset(n_trials=8, n_ticks=20)
        report = run_benchmark(ds, ["lkv"], Split(0.25), seeds=[0])
        rows = [r for r in report.rows if r["seed"] == 0]
        assert np.isclose(report.srmse("lkv", 0),
                          sum(r["rmse"] for r in rows), rtol=1e-12)
        assert np.isclose(report.smae("lkv", 0),
                          sum(r["mae"] for r in rows), rtol=1e-12)

    def test_duplicate_models_score_identically(self):
        ds = _linear_dataset(n_trials=8, n_ticks=20)
        report = run_benchmark(ds, ["lkv", "lkv"], Split(0.25), seeds=[0])
        a, b = report.aggregates
        assert a["srmse"] == b["srmse"] and a["smae"] == b["smae"]

    def test_lkv_is_exact_on_linear_data(self):
        ds = _linear_dataset(n_trials=8, n_ticks=20)
        report = run_benchmark(ds, ["lkv"], Split(0.25), seeds=[0, 1])
        for a in report.aggregates:
            assert a["srmse"] < 1e-8

    def test_unknown_model_name_recorded_as_failure(self):
        ds = _linear_dataset(n_trials=4, n_ticks=10)
        report = run_benchmark(ds, ["nope"], Split(0.5), seeds=[0])
        assert report.failures and report.failures[0]["model"] == "nope"
        assert not report.aggregates

    def test_empty_model_list(self):
        ds = _linear_dataset(n_trials=4, n_ticks=10)
        with pytest.raises(ParameterError):
            run_benchmark(ds, [], Split(0.5), seeds=[0])

    def test_training_failure_is_recorded_not_raised(self):
        ds = _linear_dataset(n_trials=2, n_ticks=2)
        report = run_benchmark(ds, ["lkv"], Split(0.5), seeds=[0])
        assert report.failures and report.failures[0]["model"] == "lkv"
        assert not report.aggregates


class TestLearningCurve:
    def test_flat_curve_on_linear_data(self):
        ds = _linear_dataset(n_trials=20, n_ticks=20)
        curve = learning_curve(ds, lambda tr, seed: fit_lkv(tr),
                               fractions=[0.1, 0.25, 0.5], n_seeds=3)
        for row in curve["summary"]:
            assert row["n_ok"] == 3
            assert row["median_rmse"] < 1e-6

    def test_fractions_must_ascend(self):
        ds = _linear_dataset(n_trials=10, n_ticks=10)
        with pytest.raises(ParameterError):
            learning_curve(ds, lambda tr, seed: fit_lkv(tr),
                           fractions=[0.5, 0.1], n_seeds=1)

    def test_failed_cells_marked_missing(self):
        ds = _linear_dataset(n_trials=10, n_ticks=2)
        curve = learning_curve(ds, lambda tr, seed: fit_lkv(tr),
                               fractions=[0.1], n_seeds=2)
        assert curve["summary"][0]["n_ok"] == 0
        assert np.isnan(curve["summary"][0]["median_rmse"])
        assert all(c["error"] for c in curve["cells"])
