"""Random survival forest with log-rank splitting and Nelson-Aalen leaves."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed

from .. import kernels
from ..data import StepFunction, SurvivalDataset, TimeGrid
from .base import ModelError, SurvivalModel
from .nonparametric import fit_nelson_aalen

MAX_SPLIT_CANDIDATES = 64


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    mtry: int | None = None
    min_node_size: int = 15
    seed: int = 0
    bootstrap: bool = True
    max_candidates: int = MAX_SPLIT_CANDIDATES


class SurvivalTree:
    """Array-encoded binary tree; ``left[i] == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, leaves: dict[int, StepFunction]):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.leaves = leaves

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        return kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def leaf_hazards_on_grid(self, grid: TimeGrid) -> np.ndarray:
        table = np.zeros((self.n_nodes, len(grid)))
        for node, curve in self.leaves.items():
            table[node] = curve.on_grid(grid)
        return table

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaves": {str(k): v.to_dict() for k, v in sorted(self.leaves.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurvivalTree":
        leaves = {int(k): StepFunction.from_dict(v) for k, v in d["leaves"].items()}
        return cls(d["feature"], d["threshold"], d["left"], d["right"], leaves)


def _split_candidates(values_sorted: np.ndarray, cap: int) -> np.ndarray:
    uniq = np.unique(values_sorted)
    if uniq.size < 2:
        return uniq[:0]
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    if mids.size > cap:
        pick = np.unique(np.round(np.linspace(0, mids.size - 1, cap)).astype(int))
        mids = mids[pick]
    return mids


def best_split(X, times, events, features, max_candidates=MAX_SPLIT_CANDIDATES):
    """Search ``features`` for the split with the largest log-rank statistic.

    Returns ``(feature, threshold, statistic)`` or ``None`` when no split
    leaves at least one event on each side. Ties go to the earlier feature
    in ``features``, then to the smaller threshold.
    """
    _, rank = np.unique(times, return_inverse=True)
    n_times = int(rank.max()) + 1
    rank = rank.astype(np.intp)
    ev = np.ascontiguousarray(events, dtype=np.uint8)
    best = None
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        xs = np.ascontiguousarray(col[order])
        cands = _split_candidates(xs, max_candidates)
        if cands.size == 0:
            continue
        stats = kernels.logrank_scan(
            xs, np.ascontiguousarray(rank[order]), np.ascontiguousarray(ev[order]),
            n_times, np.ascontiguousarray(cands),
        )
        k = int(np.argmax(stats))
        if stats[k] > 0 and (best is None or stats[k] > best[2]):
            best = (int(f), float(cands[k]), float(stats[k]))
    return best


def grow_tree(X, times, events, mtry, min_node_size, rng, max_candidates=MAX_SPLIT_CANDIDATES):
    """Grow one tree on the rows given (duplicates allowed)."""
    p = X.shape[1]
    feature, threshold, left, right = [], [], [], []
    leaves: dict[int, StepFunction] = {}

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        split = None
        if rows.size > min_node_size and events[rows].sum() >= 2:
            feats = rng.choice(p, size=mtry, replace=False)
            split = best_split(X[rows], times[rows], events[rows], feats, max_candidates)
        if split is None:
            leaves[node] = fit_nelson_aalen(times[rows], events[rows])
            continue
        f, thr, _ = split
        go_left = X[rows, f] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = f, thr
        left[node], right[node] = lnode, rnode
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, rows[~go_left]))
        stack.append((lnode, rows[go_left]))
    return SurvivalTree(feature, threshold, left, right, leaves)


def _grow_one(X, times, events, cfg: ForestConfig, mtry: int, seed_seq) -> SurvivalTree:
    rng = np.random.default_rng(seed_seq)
    n = X.shape[0]
    rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
    return grow_tree(X[rows], times[rows], events[rows], mtry, cfg.min_node_size, rng,
                     cfg.max_candidates)


def _tree_key(tree: SurvivalTree) -> str:
    doc = json.dumps(tree.to_dict(), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()


class ForestModel(SurvivalModel):
    """Ensemble prediction: mean leaf cumulative hazard, S = exp(-mean)."""

    kind = "forest"

    def __init__(self, trees: list[SurvivalTree], config: ForestConfig, n_features: int):
        # canonical order: the floating-point sum over trees, and so every
        # prediction, is then bit-identical however the trees are listed
        self.trees = sorted(trees, key=_tree_key)
        self.config = config
        self.n_features = n_features
        self._grid_cache: tuple[np.ndarray, list[np.ndarray]] | None = None

    def _tables(self, grid: TimeGrid) -> list[np.ndarray]:
        cache = self._grid_cache
        if cache is None or not np.array_equal(cache[0], grid.points):
            cache = (grid.points.copy(), [t.leaf_hazards_on_grid(grid) for t in self.trees])
            self._grid_cache = cache
        return cache[1]

    def predict_cumhazard(self, X, grid):
        X = np.ascontiguousarray(self._check_X(X))
        total = np.zeros((X.shape[0], len(grid)))
        for tree, table in zip(self.trees, self._tables(grid)):
            total += table[tree.apply(X)]
        return total / len(self.trees)

    def to_dict(self):
        return {
            "config": asdict(self.config),
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([SurvivalTree.from_dict(t) for t in d["trees"]],
                   ForestConfig(**d["config"]), d["n_features"])


def fit_survival_forest(ds: SurvivalDataset, n_trees: int = 200, mtry: int | None = None,
                        min_node_size: int = 15, seed: int = 0, bootstrap: bool = True,
                        n_jobs: int = 1) -> ForestModel:
    """Fit a random survival forest.

    Each tree sees a bootstrap sample (or the full data when
    ``bootstrap=False``), samples ``mtry`` features without replacement at
    every node (default ``ceil(sqrt(p))``) and splits on the largest
    log-rank statistic. Nodes with at most ``min_node_size`` samples, or
    without a split leaving an event on both sides, become Nelson-Aalen
    leaves. Tree ``i`` draws from the ``i``-th child of
    ``SeedSequence(seed)``, so the fit does not depend on ``n_jobs``.
    """
    ds.require_events()
    if n_trees < 1:
        raise ModelError("n_trees must be >= 1")
    mtry = math.ceil(math.sqrt(ds.p)) if mtry is None else int(mtry)
    if not 1 <= mtry <= ds.p:
        raise ModelError(f"mtry must be in [1, {ds.p}], got {mtry}")
    if min_node_size < 1:
        raise ModelError("min_node_size must be >= 1")
    if ds.n_events < min(min_node_size, ds.n):
        raise ModelError(
            f"only {ds.n_events} events; need at least min_node_size={min_node_size}"
        )
    cfg = ForestConfig(n_trees, mtry, min_node_size, int(seed), bool(bootstrap))
    X = np.ascontiguousarray(ds.features)
    seeds = np.random.SeedSequence(int(seed)).spawn(n_trees)
    if n_jobs == 1:
        trees = [_grow_one(X, ds.times, ds.events, cfg, mtry, s) for s in seeds]
    else:
        trees = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_grow_one)(X, ds.times, ds.events, cfg, mtry, s) for s in seeds
        )
    return ForestModel(list(trees), cfg, ds.p)
