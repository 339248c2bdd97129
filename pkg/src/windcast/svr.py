"""Epsilon-insensitive support vector regression with an RBF kernel.

Training solves the dual in signed form, with one coefficient
``beta_i = alpha_i - alpha_i*`` per sample:

    minimize    1/2 beta' K beta - y' beta + epsilon * sum |beta_i|
    subject to  sum beta_i = 0,  -C <= beta_i <= C

by sequential minimal optimization. Each step picks the coordinate i with
the steepest feasible increase, pairs it with the decreasing coordinate j of
largest second-order gain, and minimizes the objective exactly along ``beta_i += t, beta_j -= t``. Along that line the objective is a
convex piecewise quadratic with kinks where either coefficient crosses zero.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .embed import EmbeddedDataset, ScalerParams, apply_scaler, invert_scaler
from .errors import ArgumentError, ConvergenceWarning, DataError

DEFAULT_CACHE_BYTES = 256 * 1024 * 1024


@dataclass(frozen=True)
class SvrConfig:
    """SVR hyperparameters.

    ``gamma=None`` means ``1/lag``; ``max_passes=None`` bounds SMO at
    ``max(10 n, 10000)`` pair updates.
    """

    c: float = 1.0
    epsilon: float = 0.05
    gamma: float | None = None
    tolerance: float = 1e-3
    max_passes: int | None = None
    cache_bytes: int = DEFAULT_CACHE_BYTES

    def __post_init__(self):
        if not self.c > 0:
            raise ArgumentError(f"C must be > 0, got {self.c}")
        if not self.epsilon >= 0:
            raise ArgumentError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.gamma is not None and not self.gamma > 0:
            raise ArgumentError(f"gamma must be > 0, got {self.gamma}")
        if not self.tolerance > 0:
            raise ArgumentError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_passes is not None and self.max_passes < 1:
            raise ArgumentError("max_passes must be >= 1")
        if self.cache_bytes < 0:
            raise ArgumentError("cache_bytes must be >= 0")

    def resolved(self, lag: int, n: int) -> SvrConfig:
        return replace(self,
                       gamma=1.0 / lag if self.gamma is None else self.gamma,
                       max_passes=max(10 * n, 10_000) if self.max_passes is None else self.max_passes)

    def to_dict(self):
        return {"c": self.c, "epsilon": self.epsilon, "gamma": self.gamma,
                "tolerance": self.tolerance, "max_passes": self.max_passes,
                "cache_bytes": self.cache_bytes}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def rbf_kernel(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not gamma > 0:
        raise ArgumentError("gamma must be > 0")
    d = a - b
    return math.exp(-gamma * float(np.dot(d, d)))


def rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel block ``K[i, j] = k(a_i, b_j)`` via the norm expansion."""
    d2 = (np.einsum("ij,ij->i", a, a)[:, None] + np.einsum("ij,ij->i", b, b)[None, :]
          - 2.0 * (a @ b.T))
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


class KernelCache:
    """Least-recently-used cache of Gram-matrix rows under a byte budget."""

    def __init__(self, x: np.ndarray, gamma: float, max_bytes: int = DEFAULT_CACHE_BYTES):
        self.x = x
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", x, x)
        n = x.shape[0]
        self.capacity = max(2, int(max_bytes // max(1, 8 * n)))
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._rows)

    def row(self, i: int) -> np.ndarray:
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return r
        self.misses += 1
        d2 = self.sq + self.sq[i] - 2.0 * (self.x @ self.x[i])
        np.maximum(d2, 0.0, out=d2)
        d2[i] = 0.0
        r = np.exp(-self.gamma * d2)
        self._rows[i] = r
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return r


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    bias: float
    config: SvrConfig
    scaler: ScalerParams
    lag: int
    dual_objective: float = math.nan
    n_iter: int = 0
    converged: bool = True
    n_train: int = 0
    kind: str = field(default="svr", init=False)

    @property
    def n_support(self) -> int:
        return int(self.dual_coeffs.size)

    def decision_many(self, scaled_windows: np.ndarray) -> np.ndarray:
        """Regression output in scaled units for already-scaled windows."""
        w = np.atleast_2d(np.asarray(scaled_windows, dtype=np.float64))
        if w.shape[1] != self.lag:
            raise ArgumentError(f"window dimension {w.shape[1]} != model lag {self.lag}")
        if self.n_support == 0:
            return np.full(w.shape[0], self.bias)
        out = np.empty(w.shape[0])
        # bound the kernel block to about 32 MB
        step = max(1, (4 * 1024 * 1024) // max(1, self.n_support))
        for s in range(0, w.shape[0], step):
            k = rbf_matrix(w[s:s + step], self.support_vectors, self.config.gamma)
            out[s:s + step] = k @ self.dual_coeffs + self.bias
        return out

    def predict_many(self, windows) -> np.ndarray:
        w = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        return invert_scaler(self.decision_many(apply_scaler(w, self.scaler)), self.scaler)

    def predict(self, window) -> float:
        w = np.asarray(window, dtype=np.float64)
        if w.ndim != 1:
            raise ArgumentError("predict expects a single window; use predict_many for batches")
        return float(self.predict_many(w[None, :])[0])

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "scaler": self.scaler.to_dict(),
            "lag": self.lag,
            "bias": self.bias,
            "dual_coeffs": self.dual_coeffs.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "dual_objective": self.dual_objective,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "n_train": self.n_train,
        }

    @classmethod
    def from_dict(cls, d):
        lag = int(d["lag"])
        sv = np.asarray(d["support_vectors"], dtype=np.float64).reshape(-1, lag)
        return cls(support_vectors=sv, dual_coeffs=np.asarray(d["dual_coeffs"], dtype=np.float64),
                   bias=float(d["bias"]), config=SvrConfig.from_dict(d["config"]),
                   scaler=ScalerParams.from_dict(d["scaler"]), lag=lag,
                   dual_objective=float(d["dual_objective"]), n_iter=int(d["n_iter"]),
                   converged=bool(d["converged"]), n_train=int(d.get("n_train", 0)))


def dual_objective(beta, kernel, y, epsilon) -> float:
    """Signed-form dual objective (minimization) evaluated with a full Gram matrix."""
    beta = np.asarray(beta, dtype=np.float64)
    return float(0.5 * beta @ kernel @ beta - y @ beta + epsilon * np.abs(beta).sum())


def _line_minimum(bi, bj, gi, gj, eta, epsilon, c):
    """Exact minimizer over t >= 0 of the pair objective along (+t, -t)."""
    hi = min(c - bi, bj + c)
    if hi <= 0:
        return 0.0
    dg = gi - gj

    def phi(t):
        return 0.5 * eta * t * t + dg * t + epsilon * (abs(bi + t) + abs(bj - t))

    knots = sorted({0.0, hi, *(k for k in (-bi, bj) if 0.0 < k < hi)})
    candidates = list(knots)
    if eta > 0:
        for a, b in zip(knots[:-1], knots[1:]):
            mid = 0.5 * (a + b)
            si = 1.0 if bi + mid > 0 else -1.0
            sj = 1.0 if bj - mid > 0 else -1.0
            t = -(dg + epsilon * (si - sj)) / eta
            candidates.append(min(max(t, a), b))
    return min(candidates, key=phi)


def _snap(v, c):
    if abs(v - c) <= 1e-12 * c:
        return c
    if abs(v + c) <= 1e-12 * c:
        return -c
    if abs(v) <= 1e-15 * c:
        return 0.0
    return v


def smo_solve(x, y, config: SvrConfig):
    """Run SMO on scaled data. Returns ``(beta, bias, objective, n_iter, converged)``."""
    n = y.size
    c, eps, tol = config.c, config.epsilon, config.tolerance
    cache = KernelCache(x, config.gamma, config.cache_bytes)
    beta = np.zeros(n)
    grad = -y.copy()  # K beta - y
    converged = False
    n_iter = 0
    up_val = np.empty(n)
    dn_val = np.empty(n)
    diag = np.ones(n)  # RBF self-similarity
    while True:
        # first-order KKT: directional derivatives for raising / lowering each beta
        np.add(grad, np.where(beta >= 0, eps, -eps), out=up_val)
        up_val[beta >= c] = np.inf
        np.add(grad, np.where(beta > 0, eps, -eps), out=dn_val)
        dn_val[beta <= -c] = -np.inf
        i = int(np.argmin(up_val))
        if dn_val.max() - up_val[i] <= tol:
            converged = True
            break
        if n_iter >= config.max_passes:
            break
        n_iter += 1
        ki = cache.row(i)
        # second-order choice of j: largest guaranteed decrease b^2 / eta among violators
        b = dn_val - up_val[i]
        curv = np.maximum(ki[i] + diag - 2.0 * ki, 1e-12)
        gain = np.where(b > 0, b * b / curv, -np.inf)
        j = int(np.argmax(gain))
        kj = cache.row(j)
        eta = ki[i] + kj[j] - 2.0 * ki[j]
        t = _line_minimum(beta[i], beta[j], grad[i], grad[j], eta, eps, c)
        if t <= 0.0:
            # numerically stuck on this pair; the violation is below representable progress
            converged = False
            break
        beta[i] = _snap(beta[i] + t, c)
        beta[j] = _snap(beta[j] - t, c)
        grad += t * (ki - kj)

    free = (beta != 0) & (np.abs(beta) < c)
    if free.any():
        bias = float(np.mean(np.where(beta[free] > 0, -eps, eps) - grad[free]))
    else:
        finite_up = up_val[np.isfinite(up_val)]
        finite_dn = dn_val[np.isfinite(dn_val)]
        lo = -finite_up.min() if finite_up.size else -np.inf
        hi = -finite_dn.max() if finite_dn.size else np.inf
        if np.isfinite(lo) and np.isfinite(hi):
            bias = 0.5 * (lo + hi)
        else:
            bias = float(lo if np.isfinite(lo) else hi)
    objective = float(0.5 * beta @ (grad - y) + eps * np.abs(beta).sum())
    return beta, bias, objective, n_iter, converged


def train_svr(dataset: EmbeddedDataset, config: SvrConfig | None = None) -> SvrModel:
    """Fit an epsilon-SVR on ``dataset`` (already in its scaler's space)."""
    config = config or SvrConfig()
    n = len(dataset)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    x, y = dataset.features, dataset.targets
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("training data contains non-finite values")
    cfg = config.resolved(dataset.lag, n)
    beta, bias, objective, n_iter, converged = smo_solve(x, y, cfg)
    if not converged:
        warnings.warn(f"SMO stopped after {n_iter} iterations without reaching "
                      f"tolerance {cfg.tolerance}", ConvergenceWarning, stacklevel=2)
    keep = beta != 0
    return SvrModel(support_vectors=x[keep].copy(), dual_coeffs=beta[keep].copy(), bias=bias,
                    config=cfg, scaler=dataset.scaler, lag=dataset.lag,
                    dual_objective=objective, n_iter=n_iter, converged=converged, n_train=n)


def predict_svr(model: SvrModel, window) -> float:
    return model.predict(window)


def grid_search_svr(dataset: EmbeddedDataset, cs=(0.1, 1.0, 10.0), gammas=(None,),
                    epsilons=(0.01, 0.05), val_fraction: float = 0.2, base: SvrConfig | None = None):
    """Pick (C, gamma, epsilon) by one-step RMSE on the chronologically last rows.

    Returns ``(best_config, results)`` where ``results`` lists
    ``(config, validation_rmse)`` in grid order. RMSE is in scaled units.
    """
    if not 0 < val_fraction < 1:
        raise ArgumentError("val_fraction must lie in (0, 1)")
    n = len(dataset)
    k = n - max(1, int(round(val_fraction * n)))
    if k < 1:
        raise DataError("dataset too small for a validation split")
    fit = replace(dataset, features=dataset.features[:k], targets=dataset.targets[:k])
    base = base or SvrConfig()
    results = []
    for c, g, e in product(cs, gammas, epsilons):
        cfg = replace(base, c=c, gamma=g, epsilon=e)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            m = train_svr(fit, cfg)
        pred = m.decision_many(dataset.features[k:])
        results.append((cfg, float(np.sqrt(np.mean((pred - dataset.targets[k:]) ** 2)))))
    best = min(results, key=lambda r: r[1])[0]
    return best, results


__all__ = ["SvrConfig", "SvrModel", "KernelCache", "rbf_kernel", "rbf_matrix", "train_svr",
           "predict_svr", "dual_objective", "smo_solve", "grid_search_svr"]
