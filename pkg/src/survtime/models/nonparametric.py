"""Kaplan-Meier and Nelson-Aalen estimators."""
import numpy as np

from ..data import EmptyDatasetError, StepFunction


def _event_table(times, events):
    times = np.asarray(times, dtype=float).ravel()
    events = np.asarray(events).ravel().astype(bool)
    if times.size == 0:
        raise EmptyDatasetError("cannot estimate a survival curve from zero observations")
    if times.shape != events.shape:
        raise ValueError("times and events differ in length")
    uniq, inverse = np.unique(times, return_inverse=True)
    counts = np.bincount(inverse, minlength=uniq.size)
    deaths = np.bincount(inverse, weights=events.astype(float), minlength=uniq.size)
    at_risk = np.cumsum(counts[::-1])[::-1].astype(float)
    has_death = deaths > 0
    return uniq[has_death], deaths[has_death], at_risk[has_death]


def fit_kaplan_meier(times, events) -> StepFunction:
    """Product-limit survival estimate with knots at the unique event times."""
    t, d, y = _event_table(times, events)
    return StepFunction(t, np.cumprod(1.0 - d / y), 1.0)


def fit_nelson_aalen(times, events) -> StepFunction:
    """Cumulative hazard H(t) = sum over event times <= t of d_i / n_i."""
    t, d, y = _event_table(times, events)
    return StepFunction(t, np.cumsum(d / y), 0.0)


def fit_censoring_km(times, events) -> StepFunction:
    """Kaplan-Meier curve of the censoring distribution (reversed indicator)."""
    events = np.asarray(events).ravel().astype(bool)
    return fit_kaplan_meier(times, ~events)
