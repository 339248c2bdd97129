"""Series ingestion, train/test splitting and synthetic generators."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, EmptyInputError, GapError, ParseError, SplitError

CSV_HEADER = ("index", "speed_ms")
GAP_MODES = ("reject", "interpolate_linear", "drop_leading_trailing")


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar series.

    ``values`` is stored as a read-only float64 array. ``physical`` marks a
    measured wind speed, which must be non-negative; synthetic series leave it
    off and may take any finite value.
    """

    values: np.ndarray
    sample_interval: float = 1.0
    start_index: int = 0
    label: str = ""
    physical: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise EmptyInputError("time series must contain at least one value")
        if not np.all(np.isfinite(v)):
            raise DataError("time series contains non-finite values")
        if self.physical and np.any(v < 0):
            raise DataError("physical wind speed series contains negative values")
        if self.sample_interval <= 0:
            raise ArgumentError("sample_interval must be positive")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def with_values(self, values, **changes) -> TimeSeries:
        kw = dict(sample_interval=self.sample_interval, start_index=self.start_index,
                  label=self.label, physical=self.physical)
        kw.update(changes)
        return TimeSeries(values, **kw)


@dataclass(frozen=True)
class SplitSpec:
    """Either ``train_fraction`` in (0, 1) or an explicit ``boundary`` index."""

    train_fraction: float | None = None
    boundary: int | None = None

    def __post_init__(self):
        if (self.train_fraction is None) == (self.boundary is None):
            raise ArgumentError("SplitSpec needs exactly one of train_fraction or boundary")
        if self.train_fraction is not None and not 0.0 < self.train_fraction < 1.0:
            raise ArgumentError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class GapPolicy:
    mode: str = "reject"
    max_gap: int = 0

    def __post_init__(self):
        if self.mode not in GAP_MODES:
            raise ArgumentError(f"unknown gap mode {self.mode!r}; expected one of {GAP_MODES}")
        if self.max_gap < 0:
            raise ArgumentError("max_gap must be >= 0")


def _parse_rows(lines):
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError("CSV file is empty") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}", line=1)

    indices, speeds = [], []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
        raw_idx, raw_speed = row[0].strip(), row[1].strip()
        try:
            idx = int(raw_idx)
        except ValueError:
            raise ParseError(f"index {raw_idx!r} is not an integer", line=lineno) from None
        if idx < 0:
            raise ParseError(f"index {idx} is negative", line=lineno)
        if indices and idx <= indices[-1]:
            raise ParseError(f"index {idx} does not increase (previous {indices[-1]})", line=lineno)
        if raw_speed == "" or raw_speed.lower() in ("na", "nan"):
            speed = math.nan  # explicit missing value, treated like an absent index
        else:
            try:
                speed = float(raw_speed)
            except ValueError:
                raise ParseError(f"speed {raw_speed!r} is not a number", line=lineno) from None
            if not math.isfinite(speed):
                raise ParseError(f"speed {raw_speed!r} is not finite", line=lineno)
        indices.append(idx)
        speeds.append(speed)

    if not indices:
        raise EmptyInputError("CSV file has a header but no data rows")
    return np.asarray(indices, dtype=np.int64), np.asarray(speeds, dtype=np.float64)


def _fill_gaps(indices, speeds, policy):
    start = int(indices[0])
    grid = np.full(int(indices[-1]) - start + 1, np.nan)
    grid[indices - start] = speeds
    missing = np.isnan(grid)
    if not missing.any():
        return grid, start

    present = np.flatnonzero(~missing)
    if present.size == 0:
        raise EmptyInputError("CSV file contains no speed values")

    if policy.mode == "drop_leading_trailing":
        lo, hi = present[0], present[-1]
        grid = grid[lo:hi + 1]
        start += int(lo)
        if np.isnan(grid).any():
            first = start + int(np.flatnonzero(np.isnan(grid))[0])
            raise GapError(f"internal gap at index {first}; drop_leading_trailing only trims the ends")
        return grid, start

    # locate runs of missing samples
    edges = np.diff(np.concatenate(([0], missing.view(np.int8), [0])))
    run_starts = np.flatnonzero(edges == 1)
    run_ends = np.flatnonzero(edges == -1)
    for a, b in zip(run_starts, run_ends):
        length = b - a
        if policy.mode == "reject":
            raise GapError(f"gap of {length} sample(s) at index {start + a} (gap policy: reject)")
        if a == 0 or b == grid.size:
            raise GapError(f"gap of {length} sample(s) at index {start + a} touches the series end; "
                           "cannot interpolate")
        if length > policy.max_gap:
            raise GapError(f"gap of {length} sample(s) at index {start + a} exceeds max_gap={policy.max_gap}")
    grid[missing] = np.interp(np.flatnonzero(missing), present, grid[present])
    return grid, start


def read_csv(path, policy: GapPolicy | None = None, label: str | None = None,
             physical: bool = False, sample_interval: float = 1.0) -> TimeSeries:
    """Read a two-column ``index,speed_ms`` CSV into a :class:`TimeSeries`.

    Missing indices (or empty/``NA`` speeds) are gaps and are handled per
    ``policy``; the default rejects any gap.
    """
    policy = policy or GapPolicy()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        indices, speeds = _parse_rows(fh)
    values, start = _fill_gaps(indices, speeds, policy)
    return TimeSeries(values, sample_interval=sample_interval, start_index=start,
                      label=path.stem if label is None else label, physical=physical)


def format_csv(series: TimeSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, v in enumerate(series.values):
        # repr round-trips float64 exactly
        w.writerow((series.start_index + i, repr(float(v))))
    return buf.getvalue()


def write_csv(series: TimeSeries, path) -> None:
    Path(path).write_text(format_csv(series), encoding="utf-8")


def split(series: TimeSeries, spec: SplitSpec) -> tuple[TimeSeries, TimeSeries]:
    n = len(series)
    if spec.boundary is not None:
        k = int(spec.boundary)
    else:
        k = math.floor(spec.train_fraction * n)
    if k <= 0 or k >= n:
        raise SplitError(f"split at {k} of a length-{n} series leaves an empty segment")
    head = series.with_values(series.values[:k])
    tail = series.with_values(series.values[k:], start_index=series.start_index + k)
    return head, tail


@dataclass(frozen=True)
class MackeyGlassParams:
    """Mackey-Glass delay equation ``dx/dt = beta x(t-tau) / (1 + x(t-tau)^power) - gamma x``.

    Defaults are the classic chaotic regime (tau=17). ``dt`` is the RK4 step,
    ``sample_every`` the time between emitted samples and ``discard`` the
    number of leading samples dropped as transient. The seed picks the
    constant initial history in [0.5, 1.5), so different seeds give different
    trajectories on the same attractor, whose values stay inside
    ``MACKEY_GLASS_BOUNDS``.
    """

    tau: float = 17.0
    beta: float = 0.2
    gamma: float = 0.1
    power: float = 10.0
    dt: float = 0.1
    sample_every: float = 1.0
    discard: int = 500

    def __post_init__(self):
        if self.tau <= 0 or self.dt <= 0 or self.sample_every <= 0:
            raise ArgumentError("tau, dt and sample_every must be positive")
        if self.discard < 0:
            raise ArgumentError("discard must be >= 0")
        for name in ("tau", "sample_every"):
            ratio = getattr(self, name) / self.dt
            if abs(ratio - round(ratio)) > 1e-9:
                raise ArgumentError(f"{name} must be an integer multiple of dt")


# Range of the default-parameter attractor after the transient, with margin.
MACKEY_GLASS_BOUNDS = (0.3, 1.4)


def gen_mackey_glass(n: int, seed: int = 0, params: MackeyGlassParams | None = None,
                     label: str | None = None) -> TimeSeries:
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    p = params or MackeyGlassParams()
    rng = np.random.default_rng(seed)
    x0 = 0.5 + rng.random()

    lag_steps = int(round(p.tau / p.dt))
    per_sample = int(round(p.sample_every / p.dt))
    total_steps = (n + p.discard) * per_sample
    x = np.empty(lag_steps + total_steps + 1)
    x[: lag_steps + 1] = x0

    def rhs(xt, xd):
        return p.beta * xd / (1.0 + xd ** p.power) - p.gamma * xt

    h = p.dt
    for k in range(lag_steps, lag_steps + total_steps):
        d0 = x[k - lag_steps]
        d1 = x[k - lag_steps + 1]
        dm = 0.5 * (d0 + d1)
        xk = x[k]
        k1 = rhs(xk, d0)
        k2 = rhs(xk + 0.5 * h * k1, dm)
        k3 = rhs(xk + 0.5 * h * k2, dm)
        k4 = rhs(xk + h * k3, d1)
        x[k + 1] = xk + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    samples = x[lag_steps + per_sample * np.arange(p.discard + 1, p.discard + n + 1)]
    return TimeSeries(samples, label=label if label is not None else f"mackey-glass-{seed}")


def periodic_waveform(n: int, period: int, mean: float = 8.0, amplitude: float = 3.0) -> np.ndarray:
    # phase from t mod period so that v[t + period] == v[t] bit-for-bit
    phase = (np.arange(n) % period) / period
    return mean + amplitude * np.sin(2.0 * np.pi * phase)


def gen_noisy_periodic(n: int, period: int, noise_sd: float = 0.0, seed: int = 0,
                       mean: float = 8.0, amplitude: float = 3.0, label: str | None = None) -> TimeSeries:
    """Sinusoidal daily-cycle analogue plus Gaussian noise."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    if period < 2:
        raise ArgumentError(f"period must be >= 2, got {period}")
    if noise_sd < 0:
        raise ArgumentError("noise_sd must be >= 0")
    v = periodic_waveform(n, period, mean, amplitude)
    if noise_sd > 0:
        v = v + noise_sd * np.random.default_rng(seed).standard_normal(n)
    return TimeSeries(v, label=label if label is not None else f"periodic-{period}")


def gen_ar1(n: int, coef: float, noise_sd: float = 1.0, seed: int = 0, mean: float = 0.0,
            label: str | None = None) -> TimeSeries:
    """Stationary AR(1) process, started from its stationary distribution."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    if not -1.0 < coef < 1.0:
        raise ArgumentError("AR(1) coefficient must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    e = noise_sd * rng.standard_normal(n)
    v = np.empty(n)
    v[0] = e[0] / math.sqrt(1.0 - coef * coef)
    for t in range(1, n):
        v[t] = coef * v[t - 1] + e[t]
    return TimeSeries(v + mean, label=label if label is not None else f"ar1-{coef}")
