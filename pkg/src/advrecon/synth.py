"""Synthetic periodic signals with injected anomalies and matching labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .signal_io import TimeSeries


@dataclass(frozen=True)
class Injection:
    kind: str  # "spike", "level" or "frequency"
    start: int  # fraction-free absolute index
    length: int
    magnitude: float


def default_injections(T: int) -> list[Injection]:
    """Two point spikes and three collective anomalies spread over the series.

    Magnitudes are graded so that the anomalies are distinguishable from each
    other as well as from the background.
    """
    if T < 500:
        raise ConfigError("the default anomaly layout needs T >= 500")
    at = lambda frac: int(round(T * frac))
    return [
        Injection("spike", at(0.16), 1, 2.0),
        Injection("level", at(0.33), max(2, T // 40), 1.0),
        Injection("frequency", at(0.52), max(2, T // 25), 3.0),
        Injection("spike", at(0.68), 1, -1.4),
        Injection("level", at(0.84), max(2, T // 40), -0.6),
    ]


def _base(kind: str, n: np.ndarray, period: float) -> np.ndarray:
    phase = 2 * np.pi * n / period
    if kind == "sine":
        return np.sin(phase)
    if kind == "square":
        return np.sign(np.sin(phase) + 1e-12)
    raise ConfigError(f"unknown synthetic signal kind {kind!r}")


def generate(
    length: int = 2000,
    kind: str = "sine",
    period: float = 50.0,
    noise: float = 0.05,
    seed: int = 0,
    injections: list[Injection] | None = None,
) -> tuple[TimeSeries, list[tuple[int, int]]]:
    """Return the signal and its ``[start, end]`` label windows (inclusive).

    Timestamps are the integer step indices.
    """
    rng = np.random.default_rng(seed)
    n = np.arange(length)
    values = _base(kind, n, period)
    labels = []
    for inj in injections if injections is not None else default_injections(length):
        lo, hi = inj.start, inj.start + inj.length
        if lo < 0 or hi > length:
            raise ConfigError(f"injection {inj} falls outside the series")
        if inj.kind == "spike":
            values[lo:hi] += inj.magnitude
        elif inj.kind == "level":
            values[lo:hi] += inj.magnitude
        elif inj.kind == "frequency":
            # keep the phase continuous at the segment start
            local = np.arange(hi - lo)
            start_phase = 2 * np.pi * lo / period
            values[lo:hi] = _base(kind, local * inj.magnitude + lo, period) if kind == "square" else np.sin(
                start_phase + 2 * np.pi * local * inj.magnitude / period)
        else:
            raise ConfigError(f"unknown injection kind {inj.kind!r}")
        labels.append((lo, hi - 1))
    values = values + noise * rng.standard_normal(length)
    return TimeSeries(n.astype(np.int64), values), sorted(labels)
