"""Signal ingestion and preparation: CSV/JSON loading, resampling to uniform
spacing, scaling, detrending and sliding windows."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    AggregationError,
    ConfigError,
    DataError,
    FormatError,
    NormalizationError,
)

__all__ = [
    "TimeSeries",
    "NormParams",
    "WindowConfig",
    "WindowSet",
    "load_signal",
    "write_signal",
    "load_labels",
    "write_labels",
    "check_labels",
    "aggregate",
    "normalize",
    "denormalize",
    "detrend",
    "make_windows",
]


@dataclass(frozen=True)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray
    channel_names: tuple[str, ...] | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or ts.ndim != 1 or len(ts) != len(vals):
            raise DataError(
                f"timestamps ({ts.shape}) and values ({vals.shape}) do not align"
            )
        if len(ts) == 0:
            raise DataError("empty time series")
        if np.any(np.diff(ts) <= 0):
            raise DataError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise DataError("values contain NaN or infinite entries")
        if self.channel_names is not None and len(self.channel_names) != vals.shape[1]:
            raise DataError("channel_names length does not match channel count")
        ts = ts.copy()
        vals = vals.copy()
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> TimeSeries:
        return TimeSeries(self.timestamps, values, self.channel_names)

    def is_uniform(self) -> bool:
        if self.length < 3:
            return True
        d = np.diff(self.timestamps.astype(float))
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0.0))


@dataclass(frozen=True)
class NormParams:
    minimum: tuple[float, ...]
    maximum: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"min": list(self.minimum), "max": list(self.maximum)}

    @classmethod
    def from_dict(cls, d: dict) -> NormParams:
        return cls(tuple(float(v) for v in d["min"]), tuple(float(v) for v in d["max"]))


@dataclass(frozen=True)
class WindowConfig:
    window_size: int = 100
    step_size: int = 1

    def __post_init__(self):
        if int(self.window_size) < 1:
            raise ConfigError("window_size must be a positive integer")
        if int(self.step_size) < 1:
            raise ConfigError("step_size must be a positive integer")


@dataclass(frozen=True)
class WindowSet:
    windows: np.ndarray
    start_indices: np.ndarray
    window_size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "window_size", int(self.windows.shape[1]))

    def __len__(self) -> int:
        return len(self.start_indices)


# --------------------------------------------------------------------------
# File formats


def _parse_float(text: str, lineno: int, path) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{path}: line {lineno}: cannot parse {text!r} as a number")


def load_signal(path, format: str = "csv") -> TimeSeries:
    """Read a signal CSV (``timestamp,value`` or ``timestamp,ch1,...,chM``).

    The header row is optional. Rows are sorted by timestamp; duplicate
    timestamps are rejected.
    """
    if format != "csv":
        raise ConfigError(f"unsupported signal format {format!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")

    with open(path, newline="", encoding="utf-8") as f:
        rows = [(i, r) for i, r in enumerate(csv.reader(f), start=1) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: no data rows")

    names = None
    first_line, first = rows[0]
    try:
        float(first[0])
    except ValueError:
        names = tuple(c.strip() for c in first[1:])
        rows = rows[1:]
    if not rows:
        raise FormatError(f"{path}: header but no data rows")

    width = len(rows[0][1])
    if width < 2:
        raise FormatError(f"{path}: line {rows[0][0]}: expected at least two columns")
    if names is not None and len(names) != width - 1:
        raise FormatError(f"{path}: line {first_line}: header has {len(names) + 1} columns, data has {width}")

    ts = np.empty(len(rows))
    vals = np.empty((len(rows), width - 1))
    for n, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"{path}: line {lineno}: expected {width} columns, got {len(row)}")
        if any(not c.strip() for c in row):
            raise FormatError(f"{path}: line {lineno}: missing value")
        ts[n] = _parse_float(row[0].strip(), lineno, path)
        for c in range(1, width):
            vals[n, c - 1] = _parse_float(row[c].strip(), lineno, path)

    if not np.all(np.isfinite(vals)) or not np.all(np.isfinite(ts)):
        raise DataError(f"{path}: non-finite value present")

    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    dup = np.flatnonzero(np.diff(ts) == 0)
    if len(dup):
        raise DataError(f"{path}: duplicate timestamp {ts[dup[0]]:g}")
    if np.all(ts == np.round(ts)):
        ts = ts.astype(np.int64)
    return TimeSeries(ts, vals, names)


def write_signal(ts: TimeSeries, path) -> None:
    names = ts.channel_names or (
        ("value",) if ts.n_channels == 1 else tuple(f"ch{i + 1}" for i in range(ts.n_channels))
    )
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("timestamp",) + tuple(names))
        for stamp, row in zip(ts.timestamps, ts.values):
            w.writerow([_fmt(stamp)] + [repr(float(v)) for v in row])


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x == int(x) else repr(x)


def load_labels(path) -> list[tuple[float, float]]:
    """Read ``[[start, end], ...]`` anomaly windows; returned sorted by start."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}: invalid JSON ({e.msg})")
    if not isinstance(raw, list):
        raise FormatError(f"{path}: expected a JSON array of [start, end] pairs")
    windows = []
    for n, item in enumerate(raw):
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise FormatError(f"{path}: entry {n} is not a [start, end] pair")
        start, end = item
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in item):
            raise FormatError(f"{path}: entry {n} has non-numeric bounds")
        if start > end:
            raise DataError(f"{path}: entry {n} has start > end")
        windows.append((start, end))
    return sorted(windows)


def write_labels(windows: Sequence[tuple[float, float]], path) -> None:
    Path(path).write_text(json.dumps([[_num(s), _num(e)] for s, e in windows]) + "\n", encoding="utf-8")


def _num(x):
    x = float(x)
    return int(x) if x == int(x) else x


def check_labels(windows: Sequence[tuple[float, float]], ts: TimeSeries) -> None:
    lo, hi = ts.timestamps[0], ts.timestamps[-1]
    for s, e in windows:
        if s < lo or e > hi:
            raise DataError(f"label window [{s}, {e}] extends outside the series span [{lo}, {hi}]")


# --------------------------------------------------------------------------
# Preparation


def aggregate(ts: TimeSeries, target_length: int) -> TimeSeries:
    """Resample onto ``target_length`` equally spaced points spanning the series.

    Output point ``i`` sits at ``t0 + i * step`` and takes the mean of the
    inputs closest to it. Empty bins are linearly interpolated; leading and
    trailing gaps take the nearest filled value.
    """
    target_length = int(target_length)
    if target_length < 2:
        raise ConfigError("target_length must be at least 2")
    if target_length > ts.length:
        raise ConfigError(f"target_length {target_length} exceeds series length {ts.length}")

    t = ts.timestamps
    t0 = t[0]
    span = t[-1] - t0
    if isinstance(span, np.integer):
        # exact integer bin assignment: round(offset * (L-1) / span)
        num = (t - t0).astype(np.int64) * (target_length - 1)
        idx = (2 * num + span) // (2 * span)
    else:
        idx = np.floor((t - t0) / span * (target_length - 1) + 0.5).astype(np.int64)
    idx = np.clip(idx, 0, target_length - 1)

    counts = np.bincount(idx, minlength=target_length)
    filled = counts > 0
    if not filled.any():
        raise AggregationError("no input values fall into any interval")

    out = np.empty((target_length, ts.n_channels))
    for c in range(ts.n_channels):
        sums = np.bincount(idx, weights=ts.values[:, c], minlength=target_length)
        means = sums[filled] / counts[filled]
        # np.interp clamps to the end values outside the filled range
        out[:, c] = np.interp(np.arange(target_length), np.flatnonzero(filled), means)

    if isinstance(span, np.integer) and span % (target_length - 1) == 0:
        new_t = t0 + np.arange(target_length, dtype=np.int64) * (span // (target_length - 1))
    else:
        new_t = float(t0) + np.arange(target_length) * (float(span) / (target_length - 1))
    return TimeSeries(new_t, out, ts.channel_names)


def normalize(ts: TimeSeries) -> tuple[TimeSeries, NormParams]:
    """Scale every channel affinely onto [-1, 1]."""
    lo = ts.values.min(axis=0)
    hi = ts.values.max(axis=0)
    flat = np.flatnonzero(hi <= lo)
    if len(flat):
        raise NormalizationError(f"channel {int(flat[0])} is constant; cannot scale to [-1, 1]")
    scaled = 2.0 * (ts.values - lo) / (hi - lo) - 1.0
    return ts.with_values(scaled), NormParams(tuple(map(float, lo)), tuple(map(float, hi)))


def denormalize(ts: TimeSeries, params: NormParams) -> TimeSeries:
    lo = np.asarray(params.minimum)
    hi = np.asarray(params.maximum)
    return ts.with_values((ts.values + 1.0) / 2.0 * (hi - lo) + lo)


def detrend(ts: TimeSeries) -> TimeSeries:
    """Remove the ordinary least-squares line (fit against step index) per channel."""
    if ts.length < 2:
        raise DataError("detrend needs at least two points")
    x = np.arange(ts.length, dtype=float)
    xc = x - x.mean()
    y = ts.values
    slope = xc @ (y - y.mean(axis=0)) / (xc @ xc)
    fit = y.mean(axis=0) + np.outer(xc, slope)
    return ts.with_values(y - fit)


def make_windows(ts: TimeSeries | np.ndarray, cfg: WindowConfig) -> WindowSet:
    values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    t, s = int(cfg.window_size), int(cfg.step_size)
    if t > T:
        raise ConfigError(f"window_size {t} exceeds series length {T}")
    starts = np.arange(0, T - t + 1, s)
    view = np.lib.stride_tricks.sliding_window_view(values, t, axis=0)[starts]
    # sliding_window_view puts the window axis last
    windows = np.ascontiguousarray(np.moveaxis(view, -1, 1))
    return WindowSet(windows, starts)
