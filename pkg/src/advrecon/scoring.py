"""Per-time-step anomaly scores from overlapping window outputs.

Window-level outputs (reconstructions, critic values) are first spread back
onto the timeline as a *collection*: an array of shape ``(T, t, ...)`` whose
slot ``[j, q]`` holds the value contributed to step ``j`` by the window that
covers it at offset ``q``; uncovered slots are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .errors import ConfigError, CoverageError, ScoringError

__all__ = [
    "ErrorConfig",
    "FusionConfig",
    "collect",
    "aggregate_reconstructions",
    "error_pointwise",
    "error_area",
    "error_dtw",
    "dtw_local",
    "reconstruction_error",
    "smooth_critic",
    "zscore",
    "fuse",
]

ERROR_METHODS = ("point", "area", "dtw")
FUSION_MODES = ("critic_only", "error_only", "convex", "product")
SMOOTHING = ("kde_mode", "max", "median")


@dataclass(frozen=True)
class ErrorConfig:
    method: str = "dtw"
    half_window: int = 10

    def __post_init__(self):
        if self.method not in ERROR_METHODS:
            raise ConfigError(f"error method must be one of {ERROR_METHODS}, got {self.method!r}")
        if int(self.half_window) < 1:
            raise ConfigError("half_window must be a positive integer")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "product"
    alpha: float = 0.5
    product_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ConfigError(f"fusion mode must be one of {FUSION_MODES}, got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("convex alpha must lie in [0, 1]")


# --------------------------------------------------------------------------
# Collections


def collect(window_values, start_indices, length: int, window_size: int | None = None) -> np.ndarray:
    """Spread per-window values back onto a length-``length`` timeline.

    ``window_values`` is ``(N, t, ...)`` for per-position values such as
    reconstructions. A 1-D ``(N,)`` input (one critic score per window) is
    repeated over the ``window_size`` steps each window covers.
    """
    v = np.asarray(window_values, dtype=float)
    starts = np.asarray(start_indices, dtype=np.int64)
    if v.ndim == 1:
        if window_size is None:
            raise ScoringError("window_size is required for scalar window values")
        v = np.repeat(v[:, None], int(window_size), axis=1)
    if v.ndim < 2 or v.shape[0] != len(starts):
        raise ScoringError("window_values must be (N, t, ...) aligned with start_indices")
    t = v.shape[1]
    if len(starts) and (starts.min() < 0 or starts.max() + t > length):
        raise ScoringError("a window extends past the series end")
    out = np.full((length, t) + v.shape[2:], np.nan)
    for q in range(t):
        out[starts + q, q] = v[:, q]
    return out


def _as_padded(collection) -> np.ndarray:
    if isinstance(collection, np.ndarray):
        return collection.astype(float)
    rows = [np.asarray(c, dtype=float).ravel() for c in collection]
    width = max((len(r) for r in rows), default=0)
    out = np.full((len(rows), max(width, 1)), np.nan)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def aggregate_reconstructions(collection) -> np.ndarray:
    """Lower median of each step's contributions.

    Accepts a padded collection ``(T, t)`` / ``(T, t, M)`` or a sequence of
    per-step value lists.
    """
    c = _as_padded(collection)
    counts = np.sum(~np.isnan(c), axis=1)
    uncovered = counts == 0 if counts.ndim == 1 else np.any(counts == 0, axis=1)
    if uncovered.any():
        j = int(np.flatnonzero(uncovered)[0])
        raise CoverageError(f"time step {j} is not covered by any window")
    ordered = np.sort(np.where(np.isnan(c), np.inf, c), axis=1)
    pick = ((counts - 1) // 2)[:, None, ...]
    return np.take_along_axis(ordered, pick, axis=1)[:, 0, ...]


# --------------------------------------------------------------------------
# Reconstruction errors


def _pair(x, x_hat) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ScoringError(f"x {x.shape} and x_hat {x_hat.shape} differ in shape")
    if x.ndim == 1:
        x, x_hat = x[:, None], x_hat[:, None]
    return x, x_hat


def _combine_channels(per_channel: np.ndarray) -> np.ndarray:
    if per_channel.shape[1] == 1:
        return np.abs(per_channel[:, 0])
    return np.sqrt(np.sum(per_channel ** 2, axis=1))


def error_pointwise(x, x_hat) -> np.ndarray:
    x, x_hat = _pair(x, x_hat)
    return _combine_channels(x - x_hat)


def _check_half_window(T: int, l: int) -> None:
    if l < 1 or 2 * l >= T:
        raise ConfigError(f"half_window l={l} must satisfy 1 <= l and 2l < T={T}")


def error_area(x, x_hat, l: int = 10) -> np.ndarray:
    """Absolute trapezoid integral of ``x - x_hat`` over ``[t-l, t+l]`` divided
    by the interval length; intervals are truncated at the series edges."""
    x, x_hat = _pair(x, x_hat)
    T = x.shape[0]
    _check_half_window(T, l)
    d = x - x_hat
    pieces = 0.5 * (d[1:] + d[:-1])
    cum = np.concatenate([np.zeros((1, d.shape[1])), np.cumsum(pieces, axis=0)])
    steps = np.arange(T)
    lo = np.maximum(steps - l, 0)
    hi = np.minimum(steps + l, T - 1)
    areas = (cum[hi] - cum[lo]) / (hi - lo)[:, None]
    return _combine_channels(areas)


def dtw_local(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Warp-path score ``min over paths of sqrt(sum w_k) / K`` for a batch.

    ``a`` and ``b`` are ``(B, n, M)``; the local cost is the squared
    Euclidean distance. Paths start at (0, 0), end at (n-1, m-1) and move by
    unit steps right, down or diagonally. Because the objective depends on the
    path length K, the dynamic program tracks the cheapest path of every
    length into each cell.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    B, n, _ = a.shape
    m = b.shape[1]
    w = np.sum((a[:, :, None, :] - b[:, None, :, :]) ** 2, axis=-1)  # (B, n, m)
    kmax = n + m - 1
    inf = np.inf
    # prev[j] / cur[j]: (kmax + 1, B) best cost by path length for row i-1 / i
    prev = np.full((m, kmax + 1, B), inf)
    for i in range(n):
        cur = np.full((m, kmax + 1, B), inf)
        for j in range(m):
            if i == 0 and j == 0:
                cur[0, 1] = w[:, 0, 0]
                continue
            best = np.full((kmax, B), inf)
            if i > 0:
                np.minimum(best, prev[j, :-1], out=best)
                if j > 0:
                    np.minimum(best, prev[j - 1, :-1], out=best)
            if j > 0:
                np.minimum(best, cur[j - 1, :-1], out=best)
            cur[j, 1:] = w[:, i, j] + best
        prev = cur
    final = prev[m - 1]  # (kmax + 1, B)
    lengths = np.arange(kmax + 1, dtype=float)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.sqrt(final) / lengths
    scores[0] = inf
    return scores.min(axis=0)


def error_dtw(x, x_hat, l: int = 10) -> np.ndarray:
    """Per-step warp score between the local segments ``[t-l, t+l)`` of the
    signal and its reconstruction; segments are truncated at the edges."""
    x, x_hat = _pair(x, x_hat)
    T = x.shape[0]
    _check_half_window(T, l)
    steps = np.arange(T)
    lo = np.maximum(steps - l, 0)
    hi = np.minimum(steps + l, T)
    out = np.empty(T)
    for n in np.unique(hi - lo):
        sel = np.flatnonzero(hi - lo == n)
        idx = lo[sel][:, None] + np.arange(n)[None, :]
        out[sel] = dtw_local(x[idx], x_hat[idx])
    return out


def reconstruction_error(x, x_hat, cfg: ErrorConfig = ErrorConfig()) -> np.ndarray:
    if cfg.method == "point":
        return error_pointwise(x, x_hat)
    if cfg.method == "area":
        return error_area(x, x_hat, cfg.half_window)
    return error_dtw(x, x_hat, cfg.half_window)


# --------------------------------------------------------------------------
# Critic smoothing, standardisation and fusion


def _kde_mode(values: np.ndarray) -> float:
    if len(values) == 1 or np.all(values == values[0]):
        return float(values[0])
    ordered = np.sort(values)
    try:
        density = gaussian_kde(ordered, bw_method="scott")(ordered)
    except np.linalg.LinAlgError:
        return float(np.median(ordered))
    return float(ordered[int(np.argmax(density))])


def smooth_critic(collection, method: str = "kde_mode") -> np.ndarray:
    """Collapse each step's critic-score collection to one value.

    ``kde_mode`` fits a Gaussian KDE (Scott bandwidth) and returns the
    collection member with the highest estimated density; ties go to the
    smallest value. ``max`` and ``median`` are plain alternatives.
    """
    if method not in SMOOTHING:
        raise ConfigError(f"critic smoothing must be one of {SMOOTHING}")
    c = _as_padded(collection)
    if c.ndim != 2:
        raise ScoringError("critic collection must be (T, slots)")
    out = np.empty(c.shape[0])
    for j, row in enumerate(c):
        vals = row[~np.isnan(row)]
        if len(vals) == 0:
            raise CoverageError(f"time step {j} is not covered by any window")
        if method == "max":
            out[j] = vals.max()
        elif method == "median":
            out[j] = np.sort(vals)[(len(vals) - 1) // 2]
        else:
            out[j] = _kde_mode(vals)
    return out


def zscore(series, direction: str = "high_is_anomalous") -> np.ndarray:
    v = np.asarray(series, dtype=float)
    sd = v.std()
    if not sd > 0:
        raise ScoringError("cannot standardise a series with zero variance")
    z = (v - v.mean()) / sd
    if direction == "high_is_anomalous":
        return z
    if direction == "low_is_anomalous":
        return -z
    raise ConfigError(f"unknown z-score direction {direction!r}")


def fuse(z_re, z_c, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    z_re = np.asarray(z_re, dtype=float)
    z_c = np.asarray(z_c, dtype=float)
    if z_re.shape != z_c.shape:
        raise ScoringError("score series differ in length")
    if cfg.mode == "critic_only":
        return z_c.copy()
    if cfg.mode == "error_only":
        return z_re.copy()
    if cfg.mode == "convex":
        return cfg.alpha * z_re + (1.0 - cfg.alpha) * z_c
    return cfg.product_scale * (z_re * z_c)
