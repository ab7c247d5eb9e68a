import json

import numpy as np
import pytest

from survtime.data import SurvivalDataset
from survtime.models import model_to_json
from survtime.simulate import simulate_ph
from survtime.workflow import cross_validate, fit_model, stratified_folds


def test_stratified_folds_balance_events():
    events = np.arange(103) % 4 == 0
    labels = stratified_folds(events, 5, seed=1)
    per_fold = np.bincount(labels[events], minlength=5)
    assert per_fold.max() - per_fold.min() <= 1
    assert np.bincount(labels).max() - np.bincount(labels).min() <= 1
    np.testing.assert_array_equal(labels, stratified_folds(events, 5, seed=1))
    with pytest.raises(ValueError):
        stratified_folds(events, 1, seed=0)


def test_tiny_run_bookkeeping():
    ds = simulate_ph(10, (1.0,), censoring=0.2, seed=2)
    rep = cross_validate(ds, {"kind": "km"}, k=2, repeats=1, seed=0, metrics=["cindex", "ibs"])
    assert len(rep.folds) + len(rep.skipped) == 2
    assert len(rep.folds) == 2
    agg = rep.aggregate()
    for m in ("cindex", "ibs"):
        vals = [f.metrics[m] for f in rep.folds]
        assert agg[m]["mean"] == pytest.approx(np.mean(vals), abs=1e-15)
        assert agg[m]["n_folds"] == 2
    assert agg["cindex"]["orientation"] == "higher-better"
    assert agg["ibs"]["orientation"] == "lower-better"


def test_random_model_cindex_is_half():
    ds = simulate_ph(1000, (1.0, -0.5), censoring=0.2, seed=3)
    rep = cross_validate(ds, {"kind": "random"}, k=5, repeats=2, seed=4, metrics=["cindex"])
    assert abs(rep.aggregate()["cindex"]["mean"] - 0.5) <= 0.05


def test_constant_half_ibs_is_quarter():
    ds = simulate_ph(1000, (1.0, -0.5), censoring=0.05, seed=5)
    rep = cross_validate(ds, {"kind": "constant"}, k=5, repeats=1, seed=6, metrics=["ibs"])
    assert rep.aggregate()["ibs"]["mean"] == pytest.approx(0.25, abs=0.01)


def test_folds_without_events_are_skipped():
    rng = np.random.default_rng(0)
    events = np.zeros(30, bool)
    events[:3] = True
    ds = SurvivalDataset(rng.normal(size=(30, 1)), rng.uniform(1, 9, 30), events, ["x"])
    with pytest.warns(RuntimeWarning, match="skipped"):
        rep = cross_validate(ds, {"kind": "km"}, k=5, repeats=1, seed=0, metrics=["ibs"])
    assert len(rep.skipped) >= 2
    assert len(rep.folds) + len(rep.skipped) == 5
    assert all("no events" in s["reason"] or "before" in s["reason"] for s in rep.skipped)


def test_test_outcomes_never_reach_training():
    ds = simulate_ph(120, (1.0, -0.5), censoring=0.2, seed=7)
    spec = {"kind": "forest", "n_trees": 3, "min_node_size": 8}

    def recording(store):
        def fit(s, train, seed, n_jobs):
            model = fit_model(s, train, seed, n_jobs)
            store.append(model_to_json(model))
            return model
        return fit

    clean, poisoned = [], []
    rep_a = cross_validate(ds, spec, k=3, repeats=1, seed=1, fit=recording(clean))
    # poison the times (events kept, so fold assignment is unchanged) of fold 0's test rows
    labels = stratified_folds(ds.events, 3, np.random.SeedSequence(1).spawn(1)[0])
    times = ds.times.copy()
    times[labels == 0] = times[labels == 0] * 7.0 + 100.0
    bad = SurvivalDataset(ds.features, times, ds.events, ds.feature_names)
    rep_b = cross_validate(bad, spec, k=3, repeats=1, seed=1, fit=recording(poisoned))
    assert clean[0] == poisoned[0]
    assert clean[1] != poisoned[1] and clean[2] != poisoned[2]
    assert rep_a.folds[0].metrics != rep_b.folds[0].metrics


def test_cross_validation_determinism_and_workers():
    ds = simulate_ph(150, (1.0, -0.5), censoring=0.3, seed=8)
    spec = {"kind": "forest", "n_trees": 4, "min_node_size": 10}
    a = cross_validate(ds, spec, k=3, repeats=2, seed=9, n_jobs=1)
    b = cross_validate(ds, spec, k=3, repeats=2, seed=9, n_jobs=3)
    assert a.to_json() == b.to_json()
    assert "wall_clock_seconds" not in json.loads(a.to_json())
    timed = cross_validate(ds, {"kind": "km"}, k=3, repeats=1, seed=9, record_time=True)
    assert json.loads(timed.to_json())["wall_clock_seconds"] >= 0


def test_unknown_metric_and_model():
    ds = simulate_ph(30, (1.0,), seed=0)
    with pytest.raises(ValueError):
        cross_validate(ds, {"kind": "km"}, k=2, repeats=1, metrics=["r2"])
    with pytest.raises(ValueError):
        fit_model({"kind": "deepsurv"}, ds)
