"""NumPy implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is unavailable or ``SURVTIME_PURE_PYTHON=1``.
"""
import numpy as np


def logrank_scan(x_sorted, rank_sorted, event_sorted, n_times, thresholds):
    """Absolute log-rank statistic for each candidate split ``x <= threshold``.

    Inputs are the node's samples sorted by feature value; ``rank_sorted``
    maps each sample's time to its rank among the node's unique times.
    Candidates leaving either child without events score -1.
    """
    x_sorted = np.asarray(x_sorted, dtype=float)
    rank_sorted = np.asarray(rank_sorted, dtype=np.intp)
    ev = np.asarray(event_sorted, dtype=bool)
    n = x_sorted.size
    counts = np.bincount(rank_sorted, minlength=n_times).astype(float)
    deaths = np.bincount(rank_sorted, weights=ev.astype(float), minlength=n_times)
    at_risk = np.cumsum(counts[::-1])[::-1]
    has_death = deaths > 0
    y = at_risk[has_death]
    d = deaths[has_death]
    var_factor = np.where(y > 1, (y - d) / np.maximum(y - 1, 1) * d, 0.0)
    ev_total = int(ev.sum())
    ev_cum = np.concatenate(([0], np.cumsum(ev)))

    positions = np.searchsorted(x_sorted, thresholds, side="right")
    stats = np.full(len(thresholds), -1.0)
    for c, pos in enumerate(positions):
        ev_left = ev_cum[pos]
        if pos == 0 or pos == n or ev_left == 0 or ev_left == ev_total:
            continue
        r = rank_sorted[:pos]
        cnt_left = np.bincount(r, minlength=n_times).astype(float)
        d_left = np.bincount(r, weights=ev[:pos].astype(float), minlength=n_times)
        yl = np.cumsum(cnt_left[::-1])[::-1][has_death]
        frac = yl / y
        num = np.sum(d_left[has_death] - frac * d)
        var = np.sum(frac * (1.0 - frac) * var_factor)
        stats[c] = abs(num) / np.sqrt(var) if var > 0 else 0.0
    return stats


def apply_tree(X, feature, threshold, left, right):
    X = np.asarray(X, dtype=float)
    nodes = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = left[nodes] != -1
    while active.any():
        idx = rows[active]
        nd = nodes[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        nodes[idx] = np.where(go_left, left[nd], right[nd])
        active = left[nodes] != -1
    return nodes


def concordance_counts(risk, times, events):
    risk = np.asarray(risk, dtype=float)
    times = np.asarray(times, dtype=float)
    concordant = 0.0
    comparable = 0.0
    for i in np.flatnonzero(np.asarray(events, dtype=bool)):
        later = times[i] < times
        r = risk[later]
        comparable += r.size
        concordant += np.count_nonzero(risk[i] > r) + 0.5 * np.count_nonzero(risk[i] == r)
    return float(concordant), float(comparable)
