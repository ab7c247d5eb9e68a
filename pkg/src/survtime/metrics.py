"""Censoring-aware evaluation metrics.

Brier scores and AUC(t) are inverse-probability-of-censoring weighted with
a Kaplan-Meier estimate of the censoring distribution (Graf weighting).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .data import StepFunction, TimeGrid
from .models.nonparametric import fit_censoring_km, fit_kaplan_meier

HIGHER_BETTER = "higher-better"
LOWER_BETTER = "lower-better"


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MetricCurve:
    """Metric value per grid point. Undefined points hold NaN and are listed
    in ``diagnostics["undefined"]``."""

    grid: TimeGrid
    values: np.ndarray
    metric_name: str
    orientation: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (len(self.grid),):
            raise ValueError("metric curve length must match its grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def scaled(self, a: float) -> "MetricCurve":
        return MetricCurve(self.grid, a * self.values, self.metric_name, self.orientation,
                           dict(self.diagnostics))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "value"])
            for t, v in zip(self.grid.points, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    def to_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "orientation": self.orientation,
            "time": self.grid.points.tolist(),
            "value": [None if not np.isfinite(v) else float(v) for v in self.values],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _prediction_matrix(predictions, grid: TimeGrid) -> np.ndarray:
    if isinstance(predictions, np.ndarray):
        S = np.asarray(predictions, dtype=float)
    elif len(predictions) and isinstance(predictions[0], StepFunction):
        S = np.vstack([sf.on_grid(grid) for sf in predictions])
    else:
        S = np.asarray(predictions, dtype=float)
    if S.ndim != 2 or S.shape[1] != len(grid):
        raise MetricError(f"predictions must have shape (n, {len(grid)}), got {S.shape}")
    return S


def _censoring_curve(times, events, censoring) -> StepFunction:
    if censoring is None:
        return fit_censoring_km(times, events)
    if isinstance(censoring, StepFunction):
        return censoring
    c_times, c_events = censoring
    return fit_censoring_km(c_times, c_events)


def _left_limit(sf: StepFunction, t: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(sf.knots, t, side="left") - 1
    padded = np.concatenate(([sf.value_before_first_knot], sf.values))
    return padded[idx + 1]


def _outcomes(times, events, n):
    times = np.asarray(times, dtype=float).ravel()
    events = np.asarray(events).ravel().astype(bool)
    if times.size != n or events.size != n:
        raise MetricError("predictions, times and events must have the same length")
    return times, events


def brier_score_t(predictions, times, events, grid: TimeGrid, censoring=None) -> MetricCurve:
    """Time-dependent Brier score with Graf IPCW weights.

    At time t an observation with an event at or before t contributes
    ``S(t)**2 / G(T-)``, one still at risk (T > t) contributes
    ``(1 - S(t))**2 / G(t)`` and one censored at or before t contributes 0.
    ``censoring`` overrides the data used for ``G``: a ``(times, events)``
    pair (e.g. the training fold) or a ready-made curve. Observations whose
    weight would divide by ``G = 0`` are dropped at that t and counted in
    ``diagnostics["excluded"]``.
    """
    S = _prediction_matrix(predictions, grid)
    n = S.shape[0]
    times, events = _outcomes(times, events, n)
    G = _censoring_curve(times, events, censoring)
    t = grid.points
    g_event = _left_limit(G, times)
    g_grid = G(t)

    case = (times[:, None] <= t[None, :]) & events[:, None]
    ctrl = times[:, None] > t[None, :]
    case_ok = case & (g_event[:, None] > 0)
    ctrl_ok = ctrl & (g_grid[None, :] > 0)
    excluded = (case & ~case_ok) | (ctrl & ~ctrl_ok)

    with np.errstate(divide="ignore", invalid="ignore"):
        w_case = np.where(case_ok, 1.0 / g_event[:, None], 0.0)
        w_ctrl = np.where(ctrl_ok, 1.0 / g_grid[None, :], 0.0)
    loss = w_case * S**2 + w_ctrl * (1.0 - S) ** 2
    n_used = n - excluded.sum(axis=0)
    with np.errstate(invalid="ignore"):
        values = np.where(n_used > 0, loss.sum(axis=0) / np.maximum(n_used, 1), np.nan)
    diag = {"excluded": excluded.sum(axis=0).astype(int).tolist(),
            "undefined": np.flatnonzero(n_used == 0).tolist()}
    return MetricCurve(grid, values, "brier", LOWER_BETTER, diag)


def integrated_brier_score(curve: MetricCurve, t_range: Sequence[float] | None = None) -> float:
    """Trapezoidal average of ``curve`` over ``t_range`` (default: grid span)."""
    pts = curve.grid.points
    t_a, t_b = (pts[0], pts[-1]) if t_range is None else map(float, t_range)
    if not t_b > t_a:
        raise MetricError(f"empty integration range [{t_a}, {t_b}]")
    if t_a < pts[0] or t_b > pts[-1]:
        raise MetricError(f"range [{t_a}, {t_b}] exceeds grid span [{pts[0]}, {pts[-1]}]")
    if not np.all(np.isfinite(curve.values)):
        raise MetricError("curve has undefined values")
    inner = (pts > t_a) & (pts < t_b)
    x = np.concatenate(([t_a], pts[inner], [t_b]))
    y = np.interp(x, pts, curve.values)
    return float(trapezoid(y, x) / (t_b - t_a))


def concordance_index(risk_scores, times, events) -> float:
    """Harrell's C: pairs with time_i < time_j and an event at time_i are
    comparable; concordant when risk_i > risk_j, half credit for ties."""
    risk = np.ascontiguousarray(risk_scores, dtype=float).ravel()
    times, events = _outcomes(times, events, risk.size)
    conc, comp = kernels.concordance_counts(
        risk, np.ascontiguousarray(times), np.ascontiguousarray(events, dtype=np.uint8)
    )
    if comp == 0:
        raise MetricError("no comparable pairs")
    return conc / comp


def risk_from_survival(S: np.ndarray) -> np.ndarray:
    """Risk score for the C-index: negated mean predicted survival over the grid."""
    return -np.asarray(S, dtype=float).mean(axis=1)


def auc_t(predictions, times, events, grid: TimeGrid, censoring=None) -> MetricCurve:
    """Cumulative/dynamic AUC with IPCW-weighted cases.

    Cases have an event at or before t (weight ``1 / G(T-)``), controls
    survive past t; a case outranks a control when its risk ``1 - S(t)`` is
    larger (ties score 1/2). Points without cases or controls are NaN.
    """
    S = _prediction_matrix(predictions, grid)
    times, events = _outcomes(times, events, S.shape[0])
    G = _censoring_curve(times, events, censoring)
    g_event = _left_limit(G, times)
    values = np.full(len(grid), np.nan)
    undefined = []
    for k, t in enumerate(grid.points):
        case = (times <= t) & events & (g_event > 0)
        ctrl = times > t
        if not case.any() or not ctrl.any():
            undefined.append(k)
            continue
        risk = 1.0 - S[:, k]
        ctrl_risk = np.sort(risk[ctrl])
        case_risk = risk[case]
        below = np.searchsorted(ctrl_risk, case_risk, side="left")
        ties = np.searchsorted(ctrl_risk, case_risk, side="right") - below
        w = 1.0 / g_event[case]
        wins = (below + 0.5 * ties) / ctrl_risk.size
        values[k] = np.sum(w * wins) / np.sum(w)
    return MetricCurve(grid, values, "auc", HIGHER_BETTER, {"undefined": undefined})


def integrated_auc(curve: MetricCurve, times, events) -> float:
    """Average of AUC(t) weighted by the Kaplan-Meier event density on the
    grid, ``S(t_{k-1}) - S(t_k)``; undefined points are skipped."""
    km = fit_kaplan_meier(times, events)
    surv = km(curve.grid.points)
    density = -np.diff(np.concatenate(([1.0], surv)))
    ok = curve.defined & (density > 0)
    if not ok.any():
        raise MetricError("AUC(t) is undefined wherever the event density is positive")
    return float(np.sum(curve.values[ok] * density[ok]) / np.sum(density[ok]))
