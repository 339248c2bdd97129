"""Rolling-origin evaluation: RMSE-vs-horizon and threshold-percentage curves.

Every origin ``t`` of the test series (stepping by ``origin_stride``) with a
full lag window ending at ``t`` and ``H`` actual values after it gets an
``H``-step recursive forecast. With ``error_mode="window"`` the horizon-h
error of an origin is the RMSE over steps 1..h; ``"step"`` uses the absolute
error at step h alone.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import __version__
from .data import TimeSeries
from .errors import ArgumentError, DataError, FormatError
from .forecast import DEFAULT_MAX_HORIZON, Regressor, forecast_batch

DEFAULT_THRESHOLDS = (1.5, 2.5, 3.5)
ERROR_MODES = ("window", "step")
REPORT_FORMAT = "windcast-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    lag: int
    horizon: int = DEFAULT_MAX_HORIZON
    origin_stride: int = 1
    thresholds: tuple = DEFAULT_THRESHOLDS
    error_mode: str = "window"
    floor: float | None = None

    def __post_init__(self):
        if self.lag < 1:
            raise ArgumentError("lag must be >= 1")
        if self.horizon < 1:
            raise ArgumentError("horizon must be >= 1")
        if self.origin_stride < 1:
            raise ArgumentError("origin_stride must be >= 1")
        th = tuple(float(t) for t in self.thresholds)
        if not th or th[0] <= 0 or any(b <= a for a, b in zip(th, th[1:])):
            raise ArgumentError(f"thresholds must be positive and strictly increasing, got {th}")
        object.__setattr__(self, "thresholds", th)
        if self.error_mode not in ERROR_MODES:
            raise ArgumentError(f"error_mode must be one of {ERROR_MODES}")

    def to_dict(self):
        return {"lag": self.lag, "horizon": self.horizon, "origin_stride": self.origin_stride,
                "thresholds": list(self.thresholds), "error_mode": self.error_mode,
                "floor": self.floor}

    @classmethod
    def from_dict(cls, d):
        return cls(lag=d["lag"], horizon=d["horizon"], origin_stride=d["origin_stride"],
                   thresholds=tuple(d["thresholds"]), error_mode=d["error_mode"], floor=d["floor"])


@dataclass(frozen=True)
class EvaluationReport:
    """``per_origin_rmse[o, h-1]`` is origin o's error at horizon h.

    ``threshold_curves[k, h-1]`` is the percentage of origins whose horizon-h
    error is strictly below ``config.thresholds[k]``.
    """

    config: EvalConfig
    origins: np.ndarray
    per_origin_rmse: np.ndarray
    mean_rmse_curve: np.ndarray
    threshold_curves: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_origins(self) -> int:
        return int(self.origins.size)

    def curve_for(self, threshold: float) -> np.ndarray:
        return self.threshold_curves[self.config.thresholds.index(float(threshold))]

    def to_dict(self, include_matrix: bool = True):
        d = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "windcast_version": __version__,
            "config": self.config.to_dict(),
            "metadata": self.metadata,
            "origins": self.origins.tolist(),
            "mean_rmse_curve": self.mean_rmse_curve.tolist(),
            "threshold_curves": {repr(t): c.tolist()
                                 for t, c in zip(self.config.thresholds, self.threshold_curves)},
        }
        if include_matrix:
            d["per_origin_rmse"] = self.per_origin_rmse.tolist()
        return d

    @classmethod
    def from_dict(cls, d, per_origin_rmse=None):
        if d.get("format") != REPORT_FORMAT:
            raise FormatError("not a windcast report")
        if d.get("version") != REPORT_VERSION:
            raise FormatError(f"unsupported report version {d.get('version')}")
        config = EvalConfig.from_dict(d["config"])
        m = d.get("per_origin_rmse") if per_origin_rmse is None else per_origin_rmse
        if m is None:
            raise FormatError("report has no per-origin matrix; pass it explicitly")
        m = np.asarray(m, dtype=np.float64).reshape(-1, config.horizon)
        curves = np.array([d["threshold_curves"][repr(t)] for t in config.thresholds], dtype=np.float64)
        return cls(config=config, origins=np.asarray(d["origins"], dtype=np.int64), per_origin_rmse=m,
                   mean_rmse_curve=np.asarray(d["mean_rmse_curve"], dtype=np.float64),
                   threshold_curves=curves, metadata=d.get("metadata", {}))


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.size == 0 or p.size != a.size:
        raise ArgumentError(f"rmse needs equal non-empty lengths, got {p.size} and {a.size}")
    d = p - a
    return float(np.sqrt(np.mean(d * d)))


def origin_count(n_test: int, lag: int, horizon: int, stride: int) -> int:
    return max(0, (n_test - lag - horizon) // stride + 1)


def horizon_errors(paths: np.ndarray, actual: np.ndarray, error_mode: str = "window") -> np.ndarray:
    err = paths - actual
    if error_mode == "step":
        return np.abs(err)
    h = np.arange(1, err.shape[1] + 1)
    return np.sqrt(np.cumsum(err * err, axis=1) / h)


def aggregate(per_origin: np.ndarray, thresholds) -> tuple[np.ndarray, np.ndarray]:
    """Mean error per horizon and percent-below-threshold per (threshold, horizon)."""
    per_origin = np.asarray(per_origin, dtype=np.float64)
    if per_origin.shape[0] == 0:
        raise DataError("no origins to aggregate")
    mean = per_origin.mean(axis=0)
    n = per_origin.shape[0]
    curves = np.array([100.0 * np.count_nonzero(per_origin < t, axis=0) / n for t in thresholds])
    return mean, curves


def _model_warnings(model):
    out = []
    if getattr(model, "converged", True) is False:
        out.append("svr: SMO did not converge within max_passes")
    return out


def evaluate_model(model: Regressor, test: TimeSeries, config: EvalConfig,
                   train_label: str | None = None, test_label: str | None = None) -> EvaluationReport:
    if model.lag != config.lag:
        raise ArgumentError(f"model lag {model.lag} != evaluation lag {config.lag}")
    v = test.values if isinstance(test, TimeSeries) else np.asarray(test, dtype=np.float64)
    lag, horizon, stride = config.lag, config.horizon, config.origin_stride
    n_orig = origin_count(v.size, lag, horizon, stride)
    if n_orig < 1:
        raise DataError(f"test series of length {v.size} is too short for lag {lag} "
                        f"and horizon {horizon}; need at least {lag + horizon}")

    origins = lag - 1 + stride * np.arange(n_orig)
    windows = sliding_window_view(v, lag)[origins - lag + 1]
    actual = sliding_window_view(v[lag:], horizon)[origins - lag + 1]
    paths = forecast_batch(model, windows, horizon, floor=config.floor)
    per_origin = horizon_errors(paths, actual, config.error_mode)
    mean, curves = aggregate(per_origin, config.thresholds)

    scaler = getattr(model, "scaler", None)
    metadata = {
        "model_kind": getattr(model, "kind", "unknown"),
        "train_label": train_label or "",
        "test_label": test_label if test_label is not None else getattr(test, "label", ""),
        "scaler": getattr(scaler, "kind", None),
        "model_warnings": _model_warnings(model),
        "n_origins": int(n_orig),
        "error_mode": config.error_mode,
    }
    return EvaluationReport(config=config, origins=origins.astype(np.int64), per_origin_rmse=per_origin,
                            mean_rmse_curve=mean, threshold_curves=curves, metadata=metadata)


def _eval_cell(args):
    train_label, model, test_label, test, config = args
    return (train_label, test_label), evaluate_model(model, test, config, train_label, test_label)


def cross_evaluate(models: dict, tests: dict, config: EvalConfig, workers: int | None = 1) -> dict:
    """Evaluate every model on every test series, keyed by ``(train_label, test_label)``.

    Diagonal cells (equal labels) are the same-location runs.
    """
    if not models or not tests:
        raise ArgumentError("cross_evaluate needs at least one model and one test series")
    lags = {m.lag for m in models.values()}
    if len(lags) != 1:
        raise ArgumentError(f"models disagree on lag: {sorted(lags)}")
    jobs = [(tl, m, sl, s, config) for tl, m in models.items() for sl, s in tests.items()]
    workers = (os.cpu_count() or 1) if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_cell, jobs))
    else:
        results = [_eval_cell(j) for j in jobs]
    return dict(results)


def pool_threshold_curves(reports) -> np.ndarray:
    """Threshold curves over the union of all reports' origins, each origin weighted equally."""
    reports = list(reports)
    if not reports:
        raise ArgumentError("no reports to pool")
    cfg = reports[0].config
    for r in reports[1:]:
        if r.config != cfg:
            raise ArgumentError("reports were produced with different evaluation configs")
    _, curves = aggregate(np.vstack([r.per_origin_rmse for r in reports]), cfg.thresholds)
    return curves


def reaggregate(report: EvaluationReport) -> tuple[np.ndarray, np.ndarray]:
    return aggregate(report.per_origin_rmse, report.config.thresholds)


def save_report(report: EvaluationReport, path, matrix_csv=None, extra: dict | None = None) -> None:
    """Write the report JSON; with ``matrix_csv`` the per-origin matrix goes to that CSV instead."""
    d = report.to_dict(include_matrix=matrix_csv is None)
    if extra:
        d.update(extra)
    if matrix_csv is not None:
        d["per_origin_rmse_csv"] = Path(matrix_csv).name
        Path(matrix_csv).write_text(format_matrix_csv(report), encoding="utf-8")
    Path(path).write_text(json.dumps(d, indent=1) + "\n", encoding="utf-8")


def load_report(path) -> EvaluationReport:
    path = Path(path)
    d = json.loads(path.read_text(encoding="utf-8"))
    matrix = None
    if "per_origin_rmse" not in d and "per_origin_rmse_csv" in d:
        rows = list(csv.reader((path.parent / d["per_origin_rmse_csv"]).open(encoding="utf-8")))
        matrix = [[float(x) for x in r[1:]] for r in rows[1:]]
    return EvaluationReport.from_dict(d, per_origin_rmse=matrix)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def format_matrix_csv(report: EvaluationReport) -> str:
    header = ["origin"] + [f"h{h}" for h in range(1, report.config.horizon + 1)]
    rows = ([int(o)] + [repr(float(x)) for x in row]
            for o, row in zip(report.origins, report.per_origin_rmse))
    return _csv_text(header, rows)


def format_mean_rmse_csv(curves: dict) -> str:
    """``curves`` maps a column label to a mean-RMSE curve; all of equal length."""
    labels = list(curves)
    horizon = len(next(iter(curves.values())))
    rows = ([h + 1] + [repr(float(curves[k][h])) for k in labels] for h in range(horizon))
    return _csv_text(["horizon"] + labels, rows)


def format_threshold_csv(curves: np.ndarray, thresholds) -> str:
    header = ["horizon"] + [f"pct_below_{t:g}" for t in thresholds]
    rows = ([h + 1] + [repr(float(curves[k, h])) for k in range(len(thresholds))]
            for h in range(curves.shape[1]))
    return _csv_text(header, rows)
