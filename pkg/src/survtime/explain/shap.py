"""Time-dependent Shapley attributions (SurvSHAP(t)) with interventional value function.

The value of a coalition S at time t is the mean over background rows b of
f_t(x_S, b_{-S}). The exact estimator enumerates all 2^p coalitions; the
sampling estimator averages marginal contributions along random feature
orderings, the same orderings for every grid point.
"""
from __future__ import annotations

import math

import numpy as np

from ..data import SurvivalDataset, TimeGrid
from .curves import ShapAttribution
from .effects import predict

MAX_EXACT_FEATURES = 12
MAX_BACKGROUND = 100
_ROWS_PER_BATCH = 200_000


def select_background(ds: SurvivalDataset, cap: int = MAX_BACKGROUND, seed=0) -> np.ndarray:
    """Rows of ``ds`` used as SHAP background: all of them, or ``cap`` drawn
    without replacement (kept in original order) when there are more."""
    if ds.n <= cap:
        return ds.features
    rows = np.sort(np.random.default_rng(seed).choice(ds.n, size=cap, replace=False))
    return ds.features[rows]


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, SurvivalDataset):
        return data.features
    return np.atleast_2d(np.asarray(data, dtype=float))


def _masks_from_bits(codes: np.ndarray, p: int) -> np.ndarray:
    return ((codes[:, None] >> np.arange(p)[None, :]) & 1).astype(bool)


def coalition_values(model, X_explain, background, masks, grid: TimeGrid,
                     output: str = "survival") -> np.ndarray:
    """v(S, t) for each explained row and each coalition mask.

    Returns an array of shape (k, C, m): k explained rows, C coalitions, m
    grid points. Features inside the mask come from the explained row, the
    rest from each background row in turn.
    """
    X_explain = np.atleast_2d(np.asarray(X_explain, dtype=float))
    bg = np.asarray(background, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    k, p = X_explain.shape
    C, nb, m = masks.shape[0], bg.shape[0], len(grid)
    out = np.empty((k, C, m))
    per_pair = max(1, _ROWS_PER_BATCH // nb)
    pairs = [(i, c) for i in range(k) for c in range(C)]
    for start in range(0, len(pairs), per_pair):
        chunk = pairs[start:start + per_pair]
        rows = np.empty((len(chunk), nb, p))
        for r, (i, c) in enumerate(chunk):
            rows[r] = np.where(masks[c][None, :], X_explain[i][None, :], bg)
        preds = predict(model, rows.reshape(-1, p), grid, output).reshape(len(chunk), nb, m)
        means = preds.mean(axis=1)
        for r, (i, c) in enumerate(chunk):
            out[i, c] = means[r]
    return out


def _shapley_weights(p: int) -> np.ndarray:
    return np.array([math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p)
                     for s in range(p)])


def exact_shapley(values: np.ndarray, p: int) -> np.ndarray:
    """Shapley values from coalition values indexed by bitmask.

    ``values`` has shape (..., 2**p, m); returns (..., p, m).
    """
    codes = np.arange(2 ** p)
    sizes = np.array([bin(c).count("1") for c in codes])
    w = _shapley_weights(p)
    phi = np.empty(values.shape[:-2] + (p, values.shape[-1]))
    for j in range(p):
        without = codes[(codes >> j) & 1 == 0]
        gain = values[..., without | (1 << j), :] - values[..., without, :]
        phi[..., j, :] = np.tensordot(w[sizes[without]], gain, axes=([0], [-2]))
    return phi


def _draw_orderings(p: int, n_samples: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.vstack([rng.permutation(p) for _ in range(n_samples)])


def sampled_shapley(model, x, background, grid, n_samples, seed, output="survival"):
    """Monte-Carlo Shapley values and their standard errors, shape (p, m)."""
    p = x.size
    orders = _draw_orderings(p, n_samples, seed)
    # prefix masks along each ordering: (n_samples, p + 1, p)
    prefix = np.zeros((n_samples, p + 1, p), dtype=bool)
    rows = np.arange(n_samples)
    for k in range(p):
        prefix[:, k + 1] = prefix[:, k]
        prefix[rows, k + 1, orders[:, k]] = True
    packed = np.packbits(prefix.reshape(-1, p), axis=1)
    _, first, index = np.unique(packed, axis=0, return_index=True, return_inverse=True)
    index = index.reshape(n_samples, p + 1)
    masks = prefix.reshape(-1, p)[first]
    v = coalition_values(model, x, background, masks, grid, output)[0]
    m = len(grid)
    total = np.zeros((p, m))
    total_sq = np.zeros((p, m))
    for s in range(n_samples):
        contrib = v[index[s, 1:]] - v[index[s, :-1]]
        total[orders[s]] += contrib
        total_sq[orders[s]] += contrib ** 2
    phi = total / n_samples
    if n_samples > 1:
        var = np.clip(total_sq / n_samples - phi ** 2, 0, None) * n_samples / (n_samples - 1)
        se = np.sqrt(var / n_samples)
    else:
        se = np.zeros_like(phi)
    baseline = v[index[0, 0]]
    prediction = v[index[0, -1]]
    return phi, se, baseline, prediction


def survshap_t(model, x, background, grid: TimeGrid, estimator: str = "exact",
               n_samples: int = 1000, seed=0, output: str = "survival",
               feature_names=None, observation_id=None) -> ShapAttribution:
    """Shapley attribution curves phi_t(x, j) for a single observation.

    ``estimator`` is ``"exact"`` (p <= 12), ``"sampling"`` or ``"auto"``
    (exact when feasible). Sampling draws ``n_samples`` feature orderings
    from ``seed``.
    """
    x = np.asarray(x, dtype=float).ravel()
    bg = _as_matrix(background)
    if bg.shape[0] == 0:
        raise ValueError("background set is empty")
    p = x.size
    if bg.shape[1] != p:
        raise ValueError(f"background has {bg.shape[1]} features, observation has {p}")
    if feature_names is None:
        feature_names = (background.feature_names if isinstance(background, SurvivalDataset)
                         else tuple(f"x{j}" for j in range(p)))
    if estimator == "auto":
        estimator = "exact" if p <= MAX_EXACT_FEATURES else "sampling"
    if estimator == "exact":
        if p > MAX_EXACT_FEATURES:
            raise ValueError(f"exact estimator enumerates 2^p coalitions; p={p} exceeds "
                             f"{MAX_EXACT_FEATURES}, use estimator='sampling'")
        masks = _masks_from_bits(np.arange(2 ** p), p)
        v = coalition_values(model, x, bg, masks, grid, output)[0]
        return ShapAttribution(grid, exact_shapley(v, p), v[0], v[-1], tuple(feature_names),
                               "exact", observation_id)
    if estimator == "sampling":
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        phi, se, base, pred = sampled_shapley(model, x, bg, grid, n_samples, seed, output)
        return ShapAttribution(grid, phi, base, pred, tuple(feature_names), "sampling",
                               observation_id, n_samples, se)
    raise ValueError(f"unknown estimator {estimator!r}")
