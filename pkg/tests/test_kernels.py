import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survtime import _pykernels, kernels

import oracles

try:
    from survtime import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _kernels is not None:
    BACKENDS.append(pytest.param(_kernels, id="cython"))


def _scan_inputs(x, times, events):
    order = np.argsort(x, kind="stable")
    _, rank = np.unique(times, return_inverse=True)
    xs = np.ascontiguousarray(x[order])
    uniq = np.unique(xs)
    thr = np.ascontiguousarray((uniq[:-1] + uniq[1:]) / 2) if uniq.size > 1 else np.array([xs[0]])
    return (xs, np.ascontiguousarray(rank[order].astype(np.intp)),
            np.ascontiguousarray(events[order].astype(np.uint8)), int(rank.max()) + 1, thr)


@pytest.mark.parametrize("mod", BACKENDS)
def test_logrank_matches_oracle(mod):
    rng = np.random.default_rng(3)
    x = rng.integers(0, 6, 25).astype(float)
    times = rng.integers(1, 10, 25).astype(float)
    events = rng.random(25) < 0.7
    args = _scan_inputs(x, times, events)
    stats = mod.logrank_scan(*args)
    for thr, s in zip(args[-1], stats):
        left = x <= thr
        if not events[left].any() or not events[~left].any():
            assert s == -1
        else:
            assert s == pytest.approx(oracles.logrank_stat(x, times, events, thr), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 10_000))
def test_backends_agree_on_logrank(n, seed):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=n), 1)
    times = rng.integers(1, 8, n).astype(float)
    events = rng.random(n) < 0.6
    args = _scan_inputs(x, times, events)
    np.testing.assert_allclose(_kernels.logrank_scan(*args), _pykernels.logrank_scan(*args),
                               rtol=1e-12, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 60), seed=st.integers(0, 10_000))
def test_backends_agree_on_concordance(n, seed):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(seed)
    risk = np.round(rng.normal(size=n), 1)
    times = rng.integers(1, 10, n).astype(float)
    events = (rng.random(n) < 0.6).astype(np.uint8)
    assert _kernels.concordance_counts(risk, times, events) == \
        _pykernels.concordance_counts(risk, times, events)


@pytest.mark.parametrize("mod", BACKENDS)
def test_apply_tree_routes_rows(mod):
    # root splits x0 <= 0.5; its right child splits x1 <= 2
    feature = np.array([0, -1, 1, -1, -1], dtype=np.intp)
    threshold = np.array([0.5, 0, 2.0, 0, 0])
    left = np.array([1, -1, 3, -1, -1], dtype=np.intp)
    right = np.array([2, -1, 4, -1, -1], dtype=np.intp)
    X = np.array([[0.0, 9.0], [0.5, 0.0], [1.0, 2.0], [1.0, 2.5]])
    np.testing.assert_array_equal(mod.apply_tree(X, feature, threshold, left, right), [1, 1, 3, 4])


def test_backend_flag():
    forced = os.environ.get("SURVTIME_PURE_PYTHON", "").strip() in ("1", "true", "yes")
    expected = "cython" if _kernels is not None and not forced else "python"
    assert kernels.BACKEND == expected


def test_pure_python_override():
    env = dict(os.environ, SURVTIME_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import survtime; print(survtime.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_forest_identical_across_backends(monkeypatch):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    from survtime.data import make_time_grid
    from survtime.models import fit_survival_forest
    from survtime.simulate import simulate_ph

    ds = simulate_ph(150, (1.0, -0.5, 0.2), seed=5)
    grid = make_time_grid(ds)
    preds = []
    for mod in (_kernels, _pykernels):
        for name in ("logrank_scan", "apply_tree", "concordance_counts"):
            monkeypatch.setattr(kernels, name, getattr(mod, name))
        model = fit_survival_forest(ds, n_trees=5, seed=1)
        preds.append(model.predict_survival(ds.features, grid))
    np.testing.assert_allclose(preds[0], preds[1], rtol=1e-12)
