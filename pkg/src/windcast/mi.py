"""Histogram mutual information between a series and its delayed copy.

All quantities are in nats. Bins are equal-width over the full-series
``[min, max]`` and are shared by both marginals and by every delay, so
curves computed on the same series are directly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import TimeSeries
from .errors import ArgumentError, InsufficientDataError, SelectionError

RULES = ("negligible_threshold", "first_local_minimum", "fixed")
LEVEL_OFF_WINDOW = 5
MAX_DEFAULT_BINS = 64


@dataclass(frozen=True)
class MiCurve:
    delays: np.ndarray
    mi_values: np.ndarray
    bin_count: int
    n_effective: np.ndarray

    def __len__(self):
        return len(self.delays)


@dataclass(frozen=True)
class LagSelection:
    lag: int
    rule: str
    threshold: float | None = None


def _values(series):
    return series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)


def default_bins(n_pairs: int) -> int:
    """``ceil(sqrt(n_pairs / 5))`` capped at 64, floored at 2."""
    return int(min(MAX_DEFAULT_BINS, max(2, math.ceil(math.sqrt(n_pairs / 5.0)))))


def bin_indices(v: np.ndarray, bins: int, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.intp)
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.intp)
    return np.clip(idx, 0, bins - 1)


def _plogp_sum(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(np.sum(p * -np.log(p)))


def entropy_est(series, bins: int) -> float:
    """Plug-in histogram entropy of the series' values."""
    if bins < 2:
        raise ArgumentError(f"bins must be >= 2, got {bins}")
    v = _values(series)
    counts = np.bincount(bin_indices(v, bins), minlength=bins)
    return _plogp_sum(counts, v.size)


def _mi_from_bins(bx: np.ndarray, by: np.ndarray, bins: int) -> float:
    n = bx.size
    joint = np.bincount(bx * bins + by, minlength=bins * bins).reshape(bins, bins)
    px = joint.sum(axis=1) / n
    py = joint.sum(axis=0) / n
    rows, cols = np.nonzero(joint)
    pxy = joint[rows, cols] / n
    # (log pxy - log px) - log py keeps the delay-0 case exactly equal to entropy_est
    terms = pxy * ((np.log(pxy) - np.log(px[rows])) - np.log(py[cols]))
    return max(0.0, float(np.sum(terms)))


def mi_at_delay(series, delay: int, bins: int) -> float:
    """I(X_t; X_{t+delay}) from the joint equal-width histogram of the pairs."""
    if bins < 2:
        raise ArgumentError(f"bins must be >= 2, got {bins}")
    if delay < 0:
        raise ArgumentError(f"delay must be >= 0, got {delay}")
    v = _values(series)
    n_pairs = v.size - delay
    if n_pairs < bins:
        raise InsufficientDataError(
            f"delay {delay} leaves {max(n_pairs, 0)} pairs, fewer than bins={bins}")
    b = bin_indices(v, bins)
    return _mi_from_bins(b[:n_pairs], b[delay:], bins)


def mi_curve(series, max_delay: int, bins: int | None = None, min_delay: int = 1) -> MiCurve:
    if max_delay < 1:
        raise ArgumentError(f"max_delay must be >= 1, got {max_delay}")
    if not 0 <= min_delay <= max_delay:
        raise ArgumentError("min_delay must lie in [0, max_delay]")
    v = _values(series)
    if bins is None:
        bins = default_bins(max(v.size - max_delay, 1))
    if bins < 2:
        raise ArgumentError(f"bins must be >= 2, got {bins}")
    b = bin_indices(v, bins)
    delays = np.arange(min_delay, max_delay + 1)
    out = np.empty(delays.size)
    for k, d in enumerate(delays):
        n_pairs = v.size - d
        if n_pairs < bins:
            raise InsufficientDataError(
                f"at delay {d}: only {max(n_pairs, 0)} pairs for bins={bins}; "
                "use a longer series or a smaller max_delay")
        out[k] = _mi_from_bins(b[:n_pairs], b[d:], bins)
    return MiCurve(delays=delays, mi_values=out, bin_count=bins, n_effective=v.size - delays)


def shuffle_baseline(series, delay: int, bins: int, n_shuffles: int = 200, seed: int = 0) -> np.ndarray:
    """MI of the delay-pairs after randomly permuting the delayed marginal.

    The permutations destroy temporal dependence while keeping both marginal
    histograms, giving the estimator's null distribution.
    """
    if bins < 2:
        raise ArgumentError(f"bins must be >= 2, got {bins}")
    v = _values(series)
    n_pairs = v.size - delay
    if n_pairs < bins:
        raise InsufficientDataError(f"delay {delay} leaves too few pairs for bins={bins}")
    b = bin_indices(v, bins)
    bx, by = b[:n_pairs], b[delay:]
    rng = np.random.default_rng(seed)
    return np.array([_mi_from_bins(bx, rng.permutation(by), bins) for _ in range(n_shuffles)])


def negligible_threshold(series, bins: int, n_shuffles: int = 200, seed: int = 0) -> float:
    """Shuffle-baseline mean + 2 SD at delay 1."""
    base = shuffle_baseline(series, 1, bins, n_shuffles, seed)
    return float(base.mean() + 2.0 * base.std())


def select_lag(curve: MiCurve, rule: str = "negligible_threshold", threshold: float | None = None,
               lag: int | None = None) -> LagSelection:
    """Pick the embedding window from an MI curve.

    ``negligible_threshold``: smallest delay whose MI is <= ``threshold`` and
    whose trailing window of up to 5 delays (ending at it) is non-increasing.
    ``first_local_minimum``: first delay strictly below both neighbours.
    ``fixed``: returns ``lag`` unchanged.
    """
    if rule not in RULES:
        raise ArgumentError(f"unknown rule {rule!r}; expected one of {RULES}")
    if rule == "fixed":
        if lag is None or lag < 1:
            raise ArgumentError("rule 'fixed' needs lag >= 1")
        return LagSelection(lag=int(lag), rule=rule)
    if len(curve) == 0:
        raise ArgumentError("MI curve is empty")

    mi, delays = curve.mi_values, curve.delays
    if rule == "negligible_threshold":
        if threshold is None:
            raise ArgumentError("rule 'negligible_threshold' needs a threshold")
        for k in range(mi.size):
            if delays[k] < 1 or mi[k] > threshold:
                continue
            window = mi[max(0, k - LEVEL_OFF_WINDOW + 1): k + 1]
            if np.all(np.diff(window) <= 0):
                return LagSelection(lag=int(delays[k]), rule=rule, threshold=float(threshold))
        raise SelectionError(
            f"MI never fell to {threshold:.6g} nats with a level-off within delays "
            f"{delays[0]}..{delays[-1]}; increase max_delay")

    for k in range(1, mi.size - 1):
        if delays[k] >= 1 and mi[k] < mi[k - 1] and mi[k] < mi[k + 1]:
            return LagSelection(lag=int(delays[k]), rule=rule)
    raise SelectionError(
        f"no local minimum of MI within delays {delays[0]}..{delays[-1]}; increase max_delay")
