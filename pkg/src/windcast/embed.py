"""Delay embedding into (lag window -> next value) rows, plus a shared scaler."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import TimeSeries
from .errors import ArgumentError, DataError, EmbeddingError

SCALER_KINDS = ("none", "min_max", "z_score")


@dataclass(frozen=True)
class ScalerParams:
    """Affine map ``(v - offset) / scale`` frozen at fit time.

    ``requested`` is the kind asked for; ``kind`` is what was applied, which
    differs only when degenerate data forced the ``none`` fallback
    (``degenerate`` is then set).
    """

    kind: str = "none"
    offset: float = 0.0
    scale: float = 1.0
    requested: str = "none"
    degenerate: bool = False

    def to_dict(self):
        return {"kind": self.kind, "offset": self.offset, "scale": self.scale,
                "requested": self.requested, "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], offset=float(d["offset"]), scale=float(d["scale"]),
                   requested=d.get("requested", d["kind"]), degenerate=bool(d.get("degenerate", False)))


IDENTITY = ScalerParams()


@dataclass(frozen=True)
class EmbeddedDataset:
    """Rows ``features[t] = v[t:t+lag]`` (oldest first) with ``targets[t] = v[t+lag]``.

    ``scaler`` describes the space the arrays live in: the identity for raw
    embeddings, the fitted params after :func:`scale_dataset`.
    """

    features: np.ndarray
    targets: np.ndarray
    lag: int
    scaler: ScalerParams = IDENTITY

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        t = np.asarray(self.targets, dtype=np.float64)
        if f.ndim != 2 or t.ndim != 1 or f.shape[0] != t.shape[0]:
            raise ArgumentError(f"features {f.shape} and targets {t.shape} do not align")
        if f.shape[1] != self.lag:
            raise ArgumentError(f"feature width {f.shape[1]} != lag {self.lag}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise DataError("embedded dataset contains non-finite values")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    def __len__(self):
        return self.targets.size


def embed(series, lag: int) -> EmbeddedDataset:
    if lag < 1:
        raise ArgumentError(f"lag must be >= 1, got {lag}")
    v = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if v.size < lag + 1:
        raise EmbeddingError(f"series of length {v.size} is too short for lag {lag}; "
                             f"need at least {lag + 1} values")
    features = sliding_window_view(v[:-1], lag).copy()
    return EmbeddedDataset(features=features, targets=v[lag:].copy(), lag=lag)


def unembed(dataset: EmbeddedDataset) -> np.ndarray:
    """Rebuild the series an unscaled dataset was embedded from."""
    return np.concatenate([dataset.features[0], dataset.targets])


def fit_scaler(dataset: EmbeddedDataset, kind: str) -> ScalerParams:
    """Fit one scale over all feature values and targets together."""
    if kind not in SCALER_KINDS:
        raise ArgumentError(f"unknown scaler kind {kind!r}; expected one of {SCALER_KINDS}")
    if len(dataset) == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    if kind == "none":
        return IDENTITY
    allv = np.concatenate([dataset.features.ravel(), dataset.targets])
    if kind == "min_max":
        lo, hi = float(allv.min()), float(allv.max())
        if hi > lo:
            return ScalerParams(kind, lo, hi - lo, requested=kind)
    else:
        mu, sd = float(allv.mean()), float(allv.std())
        if sd > 0:
            return ScalerParams(kind, mu, sd, requested=kind)
    return ScalerParams("none", requested=kind, degenerate=True)


def _checked(values):
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DataError("scaler input contains non-finite values")
    return v


def apply_scaler(values, params: ScalerParams):
    v = _checked(values)
    if params.kind == "none":
        return v.copy()
    return (v - params.offset) / params.scale


def invert_scaler(values, params: ScalerParams):
    v = _checked(values)
    if params.kind == "none":
        return v.copy()
    return v * params.scale + params.offset


def scale_dataset(dataset: EmbeddedDataset, params: ScalerParams) -> EmbeddedDataset:
    if dataset.scaler.kind != "none":
        raise ArgumentError("dataset is already scaled")
    return replace(dataset, features=apply_scaler(dataset.features, params),
                   targets=apply_scaler(dataset.targets, params), scaler=params)


def prepare(series, lag: int, scaler_kind: str = "none") -> EmbeddedDataset:
    """Embed ``series`` and bring it into a freshly fitted scaler's space."""
    ds = embed(series, lag)
    return scale_dataset(ds, fit_scaler(ds, scaler_kind))
