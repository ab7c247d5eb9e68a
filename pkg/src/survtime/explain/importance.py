"""Time-dependent global importance: SurvSHAP(t) aggregation and (grouped)
permutation importance."""
from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed

from ..data import FeatureGroup, SurvivalDataset, TimeGrid, permute_rows, validate_groups
from ..metrics import auc_t, brier_score_t
from .curves import RAW_SUFFIX, ExplanationCurveSet
from .effects import predict
from .shap import (
    MAX_BACKGROUND,
    MAX_EXACT_FEATURES,
    _as_matrix,
    _masks_from_bits,
    coalition_values,
    exact_shapley,
    sampled_shapley,
    select_background,
)

PFI_MODES = ("difference", "relative", "absolute-difference")
_SFI_CHUNK = 16


def _run(n_jobs, fn, items):
    if n_jobs == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(it) for it in items)


def local_attributions(model, X, background, grid: TimeGrid, estimator="auto", n_samples=1000,
                       seed=0, output="survival", n_jobs=1) -> np.ndarray:
    """Shapley curves for every row of ``X``: array of shape (n, p, m).

    Sampling uses an independent substream of ``seed`` per row, so results
    do not depend on ``n_jobs``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    bg = _as_matrix(background)
    n, p = X.shape
    if bg.shape[0] == 0:
        raise ValueError("background set is empty")
    if estimator == "auto":
        estimator = "exact" if p <= MAX_EXACT_FEATURES else "sampling"
    if estimator == "exact":
        if p > MAX_EXACT_FEATURES:
            raise ValueError(f"exact estimator limited to p <= {MAX_EXACT_FEATURES}, got p={p}")
        masks = _masks_from_bits(np.arange(2 ** p), p)

        def work(rows):
            return exact_shapley(coalition_values(model, X[rows], bg, masks, grid, output), p)

        chunks = [np.arange(s, min(s + _SFI_CHUNK, n)) for s in range(0, n, _SFI_CHUNK)]
        return np.concatenate(_run(n_jobs, work, chunks), axis=0)
    if estimator == "sampling":
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        seeds = np.random.SeedSequence(seed).spawn(n)

        def work_one(i):
            return sampled_shapley(model, X[i], bg, grid, n_samples, seeds[i], output)[0]

        return np.stack(_run(n_jobs, work_one, list(range(n))), axis=0)
    raise ValueError(f"unknown estimator {estimator!r}")


def sfi_t(model, ds: SurvivalDataset, grid: TimeGrid, estimator: str = "auto",
          n_samples: int = 1000, seed=0, background=None,
          background_cap: int = MAX_BACKGROUND, output: str = "survival",
          n_jobs: int = 1) -> ExplanationCurveSet:
    """Mean absolute Shapley attribution per feature over the rows of ``ds``.

    The background defaults to ``ds`` itself, subsampled to
    ``background_cap`` rows with ``seed``. Dispersion is the standard
    deviation of |phi| across rows.
    """
    if background is None:
        background = select_background(ds, background_cap, seed)
    bg = _as_matrix(background)
    phi = np.abs(local_attributions(model, ds.features, bg, grid, estimator, n_samples, seed,
                                    output, n_jobs))
    curves = {nm: phi[:, j].mean(axis=0) for j, nm in enumerate(ds.feature_names)}
    disp = {nm: phi[:, j].std(axis=0) for j, nm in enumerate(ds.feature_names)}
    prov = {"method": "sfi", "estimator": estimator, "n_samples": n_samples, "seed": seed,
            "n": ds.n, "background_rows": int(bg.shape[0]), "dataset": ds.name,
            "output": output, "model": getattr(model, "kind", None)}
    return ExplanationCurveSet(grid, curves, "shap-importance", disp, provenance=prov)


def permutation_seeds(seed, b: int) -> list[np.random.SeedSequence]:
    """Seed for permutation i of b; shared by every feature and group."""
    if b < 1:
        raise ValueError("number of permutations b must be >= 1")
    return np.random.SeedSequence(seed).spawn(b)


def _metric_curve(metric, S, ds, grid, censoring):
    if metric == "brier":
        return brier_score_t(S, ds.times, ds.events, grid, censoring)
    if metric == "auc":
        return auc_t(S, ds.times, ds.events, grid, censoring)
    raise ValueError(f"unknown metric {metric!r}; use 'brier' or 'auc'")


def permutation_losses(model, ds, groups, grid, metric="brier", b=10, seed=0,
                       output="survival", censoring=None, n_jobs=1):
    """Loss curve on the intact data and after each of b permutations.

    Returns ``(base, permuted)`` with ``permuted`` of shape (len(groups), b, m).
    """
    seeds = permutation_seeds(seed, b)
    base = _metric_curve(metric, predict(model, ds.features, grid, output), ds, grid, censoring)

    def work(task):
        g, i = task
        Xp = permute_rows(ds.features, groups[g].indices, seeds[i])
        return _metric_curve(metric, predict(model, Xp, grid, output), ds, grid,
                             censoring).values

    tasks = [(g, i) for g in range(len(groups)) for i in range(b)]
    out = np.array(_run(n_jobs, work, tasks)).reshape(len(groups), b, len(grid))
    return base, out


def _importance_curves(base, permuted, names, mode):
    curves, disp, aux = {}, {}, {}
    for g, name in enumerate(names):
        if mode == "relative":
            with np.errstate(divide="ignore", invalid="ignore"):
                samples = permuted[g] / base.values[None, :]
        else:
            samples = base.values[None, :] - permuted[g]
        mean = samples.mean(axis=0)
        sd = samples.std(axis=0, ddof=1) if samples.shape[0] > 1 else np.zeros_like(mean)
        if mode == "absolute-difference":
            curves[name] = np.abs(mean)
            aux[name + RAW_SUFFIX] = mean
        else:
            curves[name] = mean
        disp[name] = np.nan_to_num(sd, nan=0.0)
    return curves, disp, aux


def _grouped_importance(model, ds, groups, grid, metric, b, seed, mode, output, censoring,
                        n_jobs, kind, method):
    if mode not in PFI_MODES:
        raise ValueError(f"unknown mode {mode!r}; use one of {PFI_MODES}")
    groups = validate_groups(groups, ds.p)
    base, permuted = permutation_losses(model, ds, groups, grid, metric, b, seed, output,
                                        censoring, n_jobs)
    curves, disp, aux = _importance_curves(base, permuted, [g.name for g in groups], mode)
    prov = {"method": method, "metric": metric, "b": b, "seed": seed, "mode": mode,
            "groups": {g.name: [ds.feature_names[j] for j in g.indices] for g in groups},
            "n": ds.n, "dataset": ds.name, "output": output,
            "model": getattr(model, "kind", None),
            "metric_undefined": base.diagnostics.get("undefined", []),
            "baseline_loss": base.values.tolist()}
    return ExplanationCurveSet(grid, curves, kind, disp, aux, prov)


def pfi_t(model, ds: SurvivalDataset, j=None, grid: TimeGrid = None, metric: str = "brier",
          b: int = 10, seed=0, mode: str = "absolute-difference", output: str = "survival",
          censoring=None, n_jobs: int = 1) -> ExplanationCurveSet:
    """Permutation importance curve of feature ``j`` (name, index, a list of
    them, or None for every feature).

    Difference mode averages L_t(intact) - L_t(permuted) over ``b``
    permutations; relative mode averages L_t(permuted) / L_t(intact);
    absolute-difference reports |difference| and keeps the signed curve as
    ``<name>#raw``. Dispersion is the standard deviation over permutations.
    ``ds`` must hold held-out outcomes.
    """
    if grid is None:
        raise ValueError("a time grid is required")
    if j is None:
        idx = list(range(ds.p))
    elif isinstance(j, (list, tuple)):
        idx = [ds.feature_index(f) for f in j]
    else:
        idx = [ds.feature_index(j)]
    groups = [FeatureGroup(ds.feature_names[k], (k,)) for k in idx]
    return _grouped_importance(model, ds, groups, grid, metric, b, seed, mode, output,
                               censoring, n_jobs, "perm-importance", "pfi")


def gpfi_t(model, ds: SurvivalDataset, groups, grid: TimeGrid = None, metric: str = "brier",
           b: int = 10, seed=0, mode: str = "absolute-difference", output: str = "survival",
           censoring=None, n_jobs: int = 1) -> ExplanationCurveSet:
    """Grouped permutation importance: each group's columns are shuffled
    together, keeping within-group relationships intact. Groups must be
    disjoint. The permutation stream is the same one :func:`pfi_t` uses."""
    if grid is None:
        raise ValueError("a time grid is required")
    return _grouped_importance(model, ds, list(groups), grid, metric, b, seed, mode, output,
                               censoring, n_jobs, "grouped-perm-importance", "gpfi")
