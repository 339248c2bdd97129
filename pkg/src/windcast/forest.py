"""Random-forest regression built from CART variance-reduction trees.

Each tree sees a bootstrap sample (drawn with replacement, default size
``floor(2n/3)``) and considers ``mtry`` randomly chosen lag columns at every
split. The forest output is the plain mean of the tree outputs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .embed import EmbeddedDataset, ScalerParams, apply_scaler, invert_scaler
from .errors import ArgumentError, DataError

# Splits whose child impurity is within this fraction of the node variance of
# the best one count as tied; ties go to the lowest feature, then threshold.
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class ForestConfig:
    """``mtry=None`` means ``max(1, lag // 3)``.

    ``bootstrap=False`` gives every tree the full training set in order,
    which together with ``mtry=lag`` yields a deterministic single CART tree.
    """

    n_trees: int = 100
    mtry: int | None = None
    min_leaf: int = 5
    bootstrap_fraction: float = 2.0 / 3.0
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ArgumentError("mtry must be >= 1")
        if self.min_leaf < 1:
            raise ArgumentError("min_leaf must be >= 1")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise ArgumentError("bootstrap_fraction must lie in (0, 1]")

    def resolved(self, lag: int) -> ForestConfig:
        mtry = max(1, lag // 3) if self.mtry is None else self.mtry
        if mtry > lag:
            raise ArgumentError(f"mtry={mtry} exceeds the feature count {lag}")
        return replace(self, mtry=mtry)

    def to_dict(self):
        return {"n_trees": self.n_trees, "mtry": self.mtry, "min_leaf": self.min_leaf,
                "bootstrap_fraction": self.bootstrap_fraction, "bootstrap": self.bootstrap,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Split(NamedTuple):
    feature: int
    threshold: float
    impurity_decrease: float


def best_split(x: np.ndarray, y: np.ndarray, candidate_features, min_leaf: int = 1) -> Split | None:
    """Variance-minimizing axis split among ``candidate_features``.

    Thresholds are midpoints between consecutive distinct sorted values;
    ``left`` is ``x[:, f] <= threshold``. The score is the size-weighted mean
    of the child variances. Returns ``None`` if the node is pure, no split
    respects ``min_leaf``, or no split lowers the impurity.
    """
    n = y.size
    if n < 2 or n < 2 * min_leaf or y.max() == y.min():
        return None
    feats = np.sort(np.asarray(candidate_features, dtype=np.intp))
    xs = x[:, feats]
    order = np.argsort(xs, axis=0, kind="stable")
    xs = np.take_along_axis(xs, order, axis=0)
    yc = y - y.mean()
    ys = yc[order]
    csum = np.cumsum(ys, axis=0)
    csq = np.cumsum(ys * ys, axis=0)

    k = np.arange(1, n)[:, None]  # left-child size
    lsum, lsq = csum[:-1], csq[:-1]
    rsum, rsq = csum[-1] - lsum, csq[-1] - lsq
    child = ((lsq - lsum * lsum / k) + (rsq - rsum * rsum / (n - k))) / n
    parent = float(np.dot(yc, yc)) / n

    valid = (xs[:-1] < xs[1:]) & (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None
    child = np.where(valid, child, np.inf)
    best = child.min()
    decrease = parent - best
    if not decrease > TIE_RTOL * parent:
        return None
    tied = child <= best + TIE_RTOL * parent
    col = int(np.flatnonzero(tied.any(axis=0))[0])
    row = int(np.flatnonzero(tied[:, col])[0])
    lo, hi = xs[row, col], xs[row + 1, col]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:  # adjacent floats: midpoint rounds onto hi
        thr = lo
    return Split(int(feats[col]), float(thr), float(parent - child[row, col]))


@dataclass(frozen=True)
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.intp)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``x``."""
        node = np.zeros(x.shape[0], dtype=np.intp)
        rows = np.arange(x.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r, nd = rows[active], node[active]
            go_left = x[r, f[active]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "n_samples": self.n_samples.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(feature=np.asarray(d["feature"], dtype=np.intp),
                   threshold=np.asarray(d["threshold"], dtype=np.float64),
                   left=np.asarray(d["left"], dtype=np.intp),
                   right=np.asarray(d["right"], dtype=np.intp),
                   value=np.asarray(d["value"], dtype=np.float64),
                   n_samples=np.asarray(d["n_samples"], dtype=np.intp))


def grow_tree(x: np.ndarray, y: np.ndarray, mtry: int, min_leaf: int, rng) -> RegressionTree:
    n_features = x.shape[1]
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[idx])))
        count.append(idx.size)
        return len(feature) - 1

    stack = [(new_node(np.arange(y.size)), np.arange(y.size))]
    while stack:
        node, idx = stack.pop()
        if idx.size < 2 * min_leaf:
            continue
        feats = rng.choice(n_features, size=mtry, replace=False) if mtry < n_features \
            else np.arange(n_features)
        s = best_split(x[idx], y[idx], feats, min_leaf)
        if s is None:
            continue
        mask = x[idx, s.feature] <= s.threshold
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = s.feature, s.threshold
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri))
        stack.append((left[node], li))

    return RegressionTree(np.asarray(feature, dtype=np.intp), np.asarray(threshold),
                          np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp),
                          np.asarray(value), np.asarray(count, dtype=np.intp))


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index])


def bootstrap_indices(n: int, config: ForestConfig, rng) -> np.ndarray:
    if not config.bootstrap:
        return np.arange(n)
    size = max(1, math.floor(config.bootstrap_fraction * n))
    return rng.integers(0, n, size=size)


def _build_tree(args):
    x, y, cfg, t = args
    rng = tree_rng(cfg.seed, t)
    idx = bootstrap_indices(y.size, cfg, rng)
    return grow_tree(x[idx], y[idx], cfg.mtry, cfg.min_leaf, rng), idx


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    config: ForestConfig
    scaler: ScalerParams
    lag: int
    oob_rmse: float | None = None
    n_train: int = 0
    kind: str = field(default="forest", init=False)

    def tree_outputs(self, scaled_windows: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(np.asarray(scaled_windows, dtype=np.float64))
        if w.shape[1] != self.lag:
            raise ArgumentError(f"window dimension {w.shape[1]} != model lag {self.lag}")
        return np.stack([t.predict(w) for t in self.trees])

    def predict_many(self, windows) -> np.ndarray:
        w = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        out = self.tree_outputs(apply_scaler(w, self.scaler)).mean(axis=0)
        return invert_scaler(out, self.scaler)

    def predict(self, window) -> float:
        w = np.asarray(window, dtype=np.float64)
        if w.ndim != 1:
            raise ArgumentError("predict expects a single window; use predict_many for batches")
        return float(self.predict_many(w[None, :])[0])

    def to_dict(self):
        return {"config": self.config.to_dict(), "scaler": self.scaler.to_dict(), "lag": self.lag,
                "oob_rmse": self.oob_rmse, "n_train": self.n_train,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls(trees=tuple(RegressionTree.from_dict(t) for t in d["trees"]),
                   config=ForestConfig.from_dict(d["config"]),
                   scaler=ScalerParams.from_dict(d["scaler"]), lag=int(d["lag"]),
                   oob_rmse=None if d["oob_rmse"] is None else float(d["oob_rmse"]),
                   n_train=int(d.get("n_train", 0)))


def train_forest(dataset: EmbeddedDataset, config: ForestConfig | None = None,
                 workers: int | None = 1) -> ForestModel:
    """Grow ``n_trees`` trees; identical output for any ``workers`` value."""
    config = config or ForestConfig()
    n = len(dataset)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    cfg = config.resolved(dataset.lag)
    x, y = dataset.features, dataset.targets
    jobs = [(x, y, cfg, t) for t in range(cfg.n_trees)]
    workers = (os.cpu_count() or 1) if workers is None else workers
    if workers > 1 and cfg.n_trees > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            built = list(pool.map(_build_tree, jobs, chunksize=max(1, cfg.n_trees // (4 * workers))))
    else:
        built = [_build_tree(j) for j in jobs]
    trees = tuple(t for t, _ in built)

    oob_rmse = None
    if cfg.bootstrap:
        rmse, coverage = _oob(built, dataset)
        if coverage == 1.0:
            oob_rmse = rmse

    return ForestModel(trees=trees, config=cfg, scaler=dataset.scaler, lag=dataset.lag,
                       oob_rmse=oob_rmse, n_train=n)


def _oob(built, dataset):
    x, y = dataset.features, dataset.targets
    n = y.size
    total = np.zeros(n)
    hits = np.zeros(n, dtype=np.intp)
    for tree, idx in built:
        out = np.ones(n, dtype=bool)
        out[idx] = False
        if out.any():
            total[out] += tree.predict(x[out])
            hits[out] += 1
    seen = hits > 0
    if not seen.any():
        return None, 0.0
    pred = invert_scaler(total[seen] / hits[seen], dataset.scaler)
    truth = invert_scaler(y[seen], dataset.scaler)
    return float(np.sqrt(np.mean((pred - truth) ** 2))), float(seen.mean())


def oob_estimate(model: ForestModel, dataset: EmbeddedDataset) -> tuple[float | None, float]:
    """Out-of-bag RMSE over the samples at least one tree left out, and their fraction.

    ``dataset`` must be the one the model was trained on; the bootstrap draws
    are regenerated from ``(seed, tree index)``. Unlike ``model.oob_rmse``
    this is defined even when some samples were never out of bag.
    """
    if not model.config.bootstrap:
        return None, 0.0
    built = [(t, bootstrap_indices(len(dataset), model.config, tree_rng(model.config.seed, i)))
             for i, t in enumerate(model.trees)]
    return _oob(built, dataset)


def predict_forest(model: ForestModel, window) -> float:
    return model.predict(window)
