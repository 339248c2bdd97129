"""Recursive multi-step forecasting.

Step 1 predicts from the observed window. Every later step drops the oldest
value and appends the previous prediction, so after ``lag`` steps the window
holds predictions only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ArgumentError, ForecastError

DEFAULT_MAX_HORIZON = 48


@runtime_checkable
class Regressor(Protocol):
    """What the forecaster and evaluator need from a trained model."""

    kind: str
    lag: int

    def predict(self, window) -> float: ...

    def predict_many(self, windows) -> np.ndarray: ...


@dataclass(frozen=True)
class ForecastPath:
    origin_index: int
    horizon: int
    values: np.ndarray
    model_kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.horizon,):
            raise ArgumentError(f"path has {v.size} values for horizon {self.horizon}")
        object.__setattr__(self, "values", v)


def _check_horizon(horizon):
    if int(horizon) != horizon or horizon < 1:
        raise ArgumentError(f"horizon must be a positive integer, got {horizon}")


def forecast_recursive(model: Regressor, window, horizon: int, floor: float | None = None,
                       origin_index: int = -1) -> ForecastPath:
    """Iterate one-step predictions ``horizon`` times from ``window``.

    With ``floor`` set, each prediction is clamped to at least ``floor``
    before it is recorded and fed back.
    """
    _check_horizon(horizon)
    w = np.array(window, dtype=np.float64)
    if w.ndim != 1 or w.size != model.lag:
        raise ArgumentError(f"window length {w.size} != model lag {model.lag}")
    out = np.empty(horizon)
    for h in range(horizon):
        p = float(model.predict(w.copy()))
        if not np.isfinite(p):
            raise ForecastError(f"non-finite prediction at step {h + 1}", step=h + 1)
        if floor is not None and p < floor:
            p = floor
        out[h] = p
        w[:-1] = w[1:]
        w[-1] = p
    return ForecastPath(origin_index=origin_index, horizon=horizon, values=out,
                        model_kind=getattr(model, "kind", "unknown"))


def forecast_batch(model: Regressor, windows, horizon: int, floor: float | None = None) -> np.ndarray:
    """Recursive paths for many origins at once; returns ``(n_origins, horizon)``.

    Same recursion as :func:`forecast_recursive` but one ``predict_many`` call
    per step across all origins.
    """
    _check_horizon(horizon)
    w = np.array(windows, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != model.lag:
        raise ArgumentError(f"windows of shape {w.shape} do not match model lag {model.lag}")
    paths = np.empty((w.shape[0], horizon))
    for h in range(horizon):
        p = np.asarray(model.predict_many(w), dtype=np.float64)
        if not np.all(np.isfinite(p)):
            raise ForecastError(f"non-finite prediction at step {h + 1}", step=h + 1)
        if floor is not None:
            p = np.maximum(p, floor)
        paths[:, h] = p
        w[:, :-1] = w[:, 1:]
        w[:, -1] = p
    return paths


def clamp_physical(path: ForecastPath, floor: float | None = 0.0) -> ForecastPath:
    """Post-hoc clamp; ``floor=None`` (non-physical series) is the identity."""
    if floor is None:
        return path
    return ForecastPath(path.origin_index, path.horizon, np.maximum(path.values, floor), path.model_kind)
