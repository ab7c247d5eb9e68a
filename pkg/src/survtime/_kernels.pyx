# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: log-rank split scan, tree routing, pair counting.

Signatures and results mirror survtime._pykernels exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport calloc, free

cnp.import_array()


def logrank_scan(const double[::1] x_sorted, const cnp.intp_t[::1] rank_sorted,
                 const cnp.uint8_t[::1] event_sorted, Py_ssize_t n_times,
                 const double[::1] thresholds):
    cdef Py_ssize_t n = x_sorted.shape[0]
    cdef Py_ssize_t n_cand = thresholds.shape[0]
    cdef Py_ssize_t i, r, c, pos = 0
    cdef long ev_total = 0, ev_left = 0
    cdef double num, var, yl, y, d, frac
    out = np.full(n_cand, -1.0)
    cdef double[::1] stats = out

    cdef double *at_risk = <double *> calloc(n_times, sizeof(double))
    cdef double *deaths = <double *> calloc(n_times, sizeof(double))
    cdef double *cnt_left = <double *> calloc(n_times, sizeof(double))
    cdef double *d_left = <double *> calloc(n_times, sizeof(double))
    if not at_risk or not deaths or not cnt_left or not d_left:
        free(at_risk); free(deaths); free(cnt_left); free(d_left)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                at_risk[rank_sorted[i]] += 1.0
                if event_sorted[i]:
                    deaths[rank_sorted[i]] += 1.0
                    ev_total += 1
            # at_risk[r] holds counts per time; turn into risk-set sizes
            for r in range(n_times - 2, -1, -1):
                at_risk[r] += at_risk[r + 1]

            for c in range(n_cand):
                while pos < n and x_sorted[pos] <= thresholds[c]:
                    cnt_left[rank_sorted[pos]] += 1.0
                    if event_sorted[pos]:
                        d_left[rank_sorted[pos]] += 1.0
                        ev_left += 1
                    pos += 1
                if pos == 0 or pos == n or ev_left == 0 or ev_left == ev_total:
                    continue
                num = 0.0
                var = 0.0
                yl = 0.0
                for r in range(n_times - 1, -1, -1):
                    yl += cnt_left[r]
                    d = deaths[r]
                    if d == 0.0:
                        continue
                    y = at_risk[r]
                    frac = yl / y
                    num += d_left[r] - frac * d
                    if y > 1.0:
                        var += frac * (1.0 - frac) * (y - d) / (y - 1.0) * d
                if var > 0.0:
                    stats[c] = fabs(num) / sqrt(var)
                else:
                    stats[c] = 0.0
    finally:
        free(at_risk); free(deaths); free(cnt_left); free(d_left)
    return out


def apply_tree(const double[:, ::1] X, const cnp.intp_t[::1] feature,
               const double[::1] threshold, const cnp.intp_t[::1] left,
               const cnp.intp_t[::1] right):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, node
    out = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] leaves = out
    with nogil:
        for i in range(n):
            node = 0
            while left[node] != -1:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            leaves[i] = node
    return out


def concordance_counts(const double[::1] risk, const double[::1] times,
                       const cnp.uint8_t[::1] events):
    """Harrell counts in O(n log n): sweep times downwards, keeping a Fenwick
    tree over risk ranks of the strictly later subjects."""
    cdef Py_ssize_t n = risk.shape[0]
    cdef Py_ssize_t[::1] order = np.argsort(np.asarray(times), kind="stable")
    cdef Py_ssize_t[::1] rank = np.unique(np.asarray(risk), return_inverse=True)[1].astype(np.intp)
    cdef Py_ssize_t m = 1 + (max(rank) if n else 0)
    cdef long long[::1] tree = np.zeros(m + 1, dtype=np.int64)
    cdef long long half_concordant = 0, comparable = 0, below, upto, inserted = 0
    cdef Py_ssize_t start, stop, k, r, q
    with nogil:
        stop = n
        while stop > 0:
            start = stop - 1
            while start > 0 and times[order[start - 1]] == times[order[stop - 1]]:
                start -= 1
            for k in range(start, stop):
                if not events[order[k]]:
                    continue
                r = rank[order[k]]
                below = 0
                q = r
                while q > 0:
                    below += tree[q]
                    q -= q & -q
                upto = 0
                q = r + 1
                while q > 0:
                    upto += tree[q]
                    q -= q & -q
                comparable += inserted
                half_concordant += 2 * below + (upto - below)
            for k in range(start, stop):
                q = rank[order[k]] + 1
                while q <= m:
                    tree[q] += 1
                    q += q & -q
            inserted += stop - start
            stop = start
    return half_concordant / 2.0, <double>comparable
