"""Proportional-hazards data simulator for tests, demos and acceptance runs."""
from __future__ import annotations

import numpy as np

from .data import SurvivalDataset


def simulate_ph(n: int = 1000, beta=(1.0, -0.5), censoring: float = 0.2,
                baseline_rate: float = 0.1, binary=(), seed=0,
                name: str = "simulated") -> SurvivalDataset:
    """Exponential-baseline Cox data: T = -log(U) / (rate * exp(beta'x)).

    Features are standard normal, except indices in ``binary`` which are
    Bernoulli(0.5). Independent exponential censoring times are scaled so
    that the realized censored fraction is as close as possible to
    ``censoring``; ``censoring=0`` disables it.
    """
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    if n < 1 or p < 1:
        raise ValueError("need n >= 1 and at least one coefficient")
    if not 0.0 <= censoring < 1.0:
        raise ValueError("censoring fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    for j in binary:
        X[:, j] = rng.integers(0, 2, size=n)
    u = rng.uniform(size=n)
    event_time = -np.log1p(-u) / (baseline_rate * np.exp(X @ beta))
    v = rng.uniform(size=n)
    unit_censor = -np.log1p(-v)

    if censoring == 0.0:
        times, events = event_time, np.ones(n, dtype=bool)
    else:
        # censored fraction of C = unit_censor / rate increases with rate
        lo, hi = 1e-12, 1e12
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            if np.mean(unit_censor / mid < event_time) < censoring:
                lo = mid
            else:
                hi = mid
        cens_time = unit_censor / hi
        events = event_time <= cens_time
        times = np.minimum(event_time, cens_time)
    names = [f"x{j + 1}" for j in range(p)]
    return SurvivalDataset(X, times, events, names, name=name)
