"""Compare the compiled kernels with their NumPy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--n 2000] [--repeat 5] [--json out.json]

Each kernel is timed on identical inputs through both backends (best of
``--repeat`` runs) and the outputs are checked for agreement. The last row
times a whole forest fit with the dispatch table pointed at each backend.
"""
import argparse
import json
import sys
import timeit
from contextlib import contextmanager

import numpy as np

from survtime import _pykernels, kernels
from survtime.models import fit_survival_forest
from survtime.simulate import simulate_ph

try:
    from survtime import _kernels
except ImportError:  # extension not built
    _kernels = None

NAMES = ("logrank_scan", "apply_tree", "concordance_counts")


@contextmanager
def backend(module):
    saved = {nm: getattr(kernels, nm) for nm in NAMES}
    try:
        for nm in NAMES:
            setattr(kernels, nm, getattr(module, nm))
        yield
    finally:
        for nm, fn in saved.items():
            setattr(kernels, nm, fn)


def logrank_inputs(n, rng):
    x = np.sort(rng.normal(size=n))
    times = rng.exponential(size=n)
    _, rank = np.unique(times, return_inverse=True)
    events = rng.random(n) < 0.7
    thresholds = np.quantile(x, np.linspace(0.02, 0.98, 64))
    return (x, rank.astype(np.intp), events.astype(np.uint8), int(rank.max()) + 1, thresholds)


def tree_inputs(n, rng, depth=10, p=5):
    n_nodes = 2 ** (depth + 1) - 1
    internal = 2 ** depth - 1
    idx = np.arange(n_nodes)
    left = np.where(idx < internal, 2 * idx + 1, -1).astype(np.intp)
    right = np.where(idx < internal, 2 * idx + 2, -1).astype(np.intp)
    feature = rng.integers(0, p, n_nodes).astype(np.intp)
    threshold = rng.normal(size=n_nodes)
    return (np.ascontiguousarray(rng.normal(size=(n, p))), feature, threshold, left, right)


def concordance_inputs(n, rng):
    return (rng.normal(size=n), rng.exponential(size=n), (rng.random(n) < 0.7).astype(np.uint8))


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def run(n, repeat, n_trees):
    rng = np.random.default_rng(0)
    cases = {
        "logrank_scan": logrank_inputs(n, rng),
        "apply_tree": tree_inputs(n, rng),
        "concordance_counts": concordance_inputs(n, rng),
    }
    rows = []
    for name, args in cases.items():
        py_fn = getattr(_pykernels, name)
        py_t = best_of(lambda: py_fn(*args), repeat)
        row = {"kernel": name, "n": n, "python_s": py_t, "cython_s": None, "speedup": None}
        if _kernels is not None:
            c_fn = getattr(_kernels, name)
            a, b = np.asarray(py_fn(*args)), np.asarray(c_fn(*args))
            if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
            c_t = best_of(lambda: c_fn(*args), repeat)
            row.update(cython_s=c_t, speedup=py_t / c_t)
        rows.append(row)

    ds = simulate_ph(min(n, 1000), (1.0, -0.5, 0.25, 0.0), seed=1)
    fits = {}
    for label, module in (("python", _pykernels), ("cython", _kernels)):
        if module is None:
            continue
        with backend(module):
            fits[label] = best_of(
                lambda: fit_survival_forest(ds, n_trees=n_trees, min_node_size=15, seed=2),
                max(1, repeat // 2))
    rows.append({"kernel": f"forest fit ({n_trees} trees)", "n": ds.n,
                 "python_s": fits["python"], "cython_s": fits.get("cython"),
                 "speedup": fits["python"] / fits["cython"] if "cython" in fits else None})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="rows per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--json", help="also write the results to this file")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; timing the NumPy fallback only", file=sys.stderr)
    rows = run(args.n, args.repeat, args.trees)
    print(f"{'kernel':<26}{'n':>7}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>9}")
    for r in rows:
        c = "-" if r["cython_s"] is None else f"{1e3 * r['cython_s']:.3f}"
        s = "-" if r["speedup"] is None else f"{r['speedup']:.1f}x"
        print(f"{r['kernel']:<26}{r['n']:>7}{1e3 * r['python_s']:>14.3f}{c:>14}{s:>9}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")


if __name__ == "__main__":
    main()
