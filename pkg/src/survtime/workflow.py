"""Model specs and repeated, stratified k-fold cross-validation."""
from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import SurvivalDataset, TimeGrid, make_time_grid
from .metrics import (
    HIGHER_BETTER,
    LOWER_BETTER,
    auc_t,
    brier_score_t,
    concordance_index,
    integrated_auc,
    integrated_brier_score,
    risk_from_survival,
)
from .models import (
    ConstantModel,
    KaplanMeierModel,
    RandomRiskModel,
    fit_coxph,
    fit_survival_forest,
)

MODEL_KINDS = ("coxph", "forest", "km", "random", "constant")
METRICS = {"cindex": HIGHER_BETTER, "ibs": LOWER_BETTER, "iauc": HIGHER_BETTER}


def fit_model(spec: dict, ds: SurvivalDataset, seed: int = 0, n_jobs: int = 1):
    """Fit the model described by ``spec`` (``{"kind": ..., **hyperparameters}``)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "coxph":
        return fit_coxph(ds, max_iter=spec.get("max_iter", 50), tol=spec.get("tol", 1e-7))
    if kind == "forest":
        return fit_survival_forest(
            ds, n_trees=spec.get("n_trees", 200), mtry=spec.get("mtry"),
            min_node_size=spec.get("min_node_size", 15), seed=seed,
            bootstrap=spec.get("bootstrap", True), n_jobs=n_jobs,
        )
    if kind == "km":
        return KaplanMeierModel.fit(ds)
    if kind == "random":
        return RandomRiskModel.fit(ds, seed=seed)
    if kind == "constant":
        return ConstantModel(ds.p, spec.get("value", 0.5))
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def stratified_folds(events, k: int, seed) -> np.ndarray:
    """Fold label per row; events and censored rows are dealt round-robin
    after a seeded shuffle so every fold gets its share of both."""
    if k < 2:
        raise ValueError("cross-validation needs k >= 2 folds")
    events = np.asarray(events, dtype=bool)
    rng = np.random.default_rng(seed)
    folds = np.empty(events.size, dtype=int)
    offset = 0
    for stratum in (np.flatnonzero(events), np.flatnonzero(~events)):
        shuffled = rng.permutation(stratum)
        folds[shuffled] = (np.arange(shuffled.size) + offset) % k
        offset += shuffled.size
    return folds


@dataclass
class FoldResult:
    repeat: int
    fold: int
    n_train: int
    n_test: int
    metrics: dict[str, float]


@dataclass
class EvaluationReport:
    model_spec: dict
    k: int
    repeats: int
    seed: int
    metrics: list[str]
    folds: list[FoldResult] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    wall_clock_seconds: float | None = None

    def aggregate(self) -> dict[str, dict]:
        out = {}
        for m in self.metrics:
            vals = np.array([f.metrics[m] for f in self.folds if m in f.metrics], dtype=float)
            vals = vals[np.isfinite(vals)]
            out[m] = {
                "mean": float(vals.mean()) if vals.size else None,
                "std": float(vals.std(ddof=1)) if vals.size > 1 else None,
                "n_folds": int(vals.size),
                "orientation": METRICS[m],
            }
        return out

    def to_dict(self) -> dict:
        d = {
            "model": self.model_spec,
            "k": self.k,
            "repeats": self.repeats,
            "seed": self.seed,
            "aggregate": self.aggregate(),
            "folds": [f.__dict__ for f in self.folds],
            "skipped": self.skipped,
        }
        if self.wall_clock_seconds is not None:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["repeat", "fold", "n_train", "n_test", *self.metrics])
            for f in self.folds:
                w.writerow([f.repeat, f.fold, f.n_train, f.n_test,
                            *[repr(f.metrics.get(m, float("nan"))) for m in self.metrics]])


def evaluation_grid(train: SurvivalDataset, test: SurvivalDataset, strategy="event-times",
                    m=None) -> TimeGrid | None:
    """Grid from the test fold's event times, restricted to times before the
    last training time so the censoring weights stay defined."""
    grid = make_time_grid(test, strategy, m)
    pts = grid.points[grid.points < train.times.max()]
    return TimeGrid(pts) if pts.size else None


def score_fold(model, train, test, metrics, grid_strategy="event-times", grid_m=None):
    grid = evaluation_grid(train, test, grid_strategy, grid_m)
    if grid is None:
        return None
    S = model.predict_survival(test.features, grid)
    censoring = (train.times, train.events)
    out = {}
    if "cindex" in metrics:
        out["cindex"] = concordance_index(risk_from_survival(S), test.times, test.events)
    if "ibs" in metrics:
        curve = brier_score_t(S, test.times, test.events, grid, censoring)
        out["ibs"] = (float(curve.values[0]) if len(grid) == 1
                      else integrated_brier_score(curve))
    if "iauc" in metrics:
        curve = auc_t(S, test.times, test.events, grid, censoring)
        try:
            out["iauc"] = integrated_auc(curve, test.times, test.events)
        except ValueError:
            out["iauc"] = float("nan")
    return out


def cross_validate(ds: SurvivalDataset, model_spec: dict, k: int = 10, repeats: int = 10,
                   seed: int = 0, metrics=("cindex", "ibs", "iauc"),
                   grid_strategy: str = "event-times", grid_m: int | None = None,
                   n_jobs: int = 1, record_time: bool = False,
                   fit=fit_model) -> EvaluationReport:
    """Repeated stratified k-fold evaluation; metrics use test folds only.

    Each repeat shuffles with its own child of ``SeedSequence(seed)``; the
    model in fold f of repeat r is fitted with seed ``[seed, r, f]``. Folds
    whose training or test part has no events are skipped and listed in
    ``report.skipped``.
    """
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ValueError(f"unknown metric(s) {unknown}; expected {sorted(METRICS)}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    start = time.perf_counter()
    report = EvaluationReport(dict(model_spec), k, repeats, int(seed), list(metrics))
    repeat_seeds = np.random.SeedSequence(seed).spawn(repeats)
    for r in range(repeats):
        labels = stratified_folds(ds.events, k, repeat_seeds[r])
        for f in range(k):
            test_rows = np.flatnonzero(labels == f)
            train_rows = np.flatnonzero(labels != f)
            if test_rows.size == 0:
                report.skipped.append({"repeat": r, "fold": f, "reason": "empty test fold"})
                continue
            train, test = ds.subset(train_rows), ds.subset(test_rows)
            if train.n_events == 0 or test.n_events == 0:
                reason = "no events in " + ("training" if train.n_events == 0 else "test") + " fold"
                warnings.warn(f"repeat {r} fold {f} skipped: {reason}", RuntimeWarning)
                report.skipped.append({"repeat": r, "fold": f, "reason": reason})
                continue
            fold_seed = int(np.random.SeedSequence([seed, r, f]).generate_state(1)[0])
            model = fit(model_spec, train, fold_seed, n_jobs)
            scores = score_fold(model, train, test, metrics, grid_strategy, grid_m)
            if scores is None:
                report.skipped.append({"repeat": r, "fold": f,
                                       "reason": "no test event before the last training time"})
                continue
            report.folds.append(FoldResult(r, f, train.n, test.n, scores))
    if record_time:
        report.wall_clock_seconds = time.perf_counter() - start
    return report
