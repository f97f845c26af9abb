"""Locally adaptive thresholding of a score series and false-positive pruning."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThresholdConfig:
    window_fraction: float = 1 / 3
    step_fraction: float = 1 / 30
    sigmas: float = 4.0

    def __post_init__(self):
        if not 0 < self.step_fraction <= self.window_fraction <= 1:
            raise ConfigError("need 0 < step_fraction <= window_fraction <= 1")
        if not self.sigmas > 0:
            raise ConfigError("sigmas must be positive")


@dataclass(frozen=True)
class PruneConfig:
    theta: float = 0.1

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ConfigError("theta must lie in (0, 1)")


@dataclass(frozen=True)
class AnomalousSequence:
    start: int
    end: int
    max_score: float


def threshold_windows(T: int, cfg: ThresholdConfig) -> list[tuple[int, int]]:
    """Half-open ``[lo, hi)`` windows used for thresholding; the last one is
    aligned to the series end so the tail is always evaluated."""
    size = max(1, min(T, int(T * cfg.window_fraction)))
    step = max(1, int(T * cfg.step_fraction))
    spans = [(lo, lo + size) for lo in range(0, T - size + 1, step)]
    if spans[-1][1] < T:
        spans.append((T - size, T))
    return spans


def adaptive_threshold(scores, cfg: ThresholdConfig = ThresholdConfig()) -> np.ndarray:
    """Flag points above ``mean + sigmas * std`` of any window covering them."""
    s = np.asarray(scores, dtype=float)
    T = len(s)
    if T < 10:
        raise DataError("adaptive_threshold needs at least 10 scores")
    mask = np.zeros(T, dtype=bool)
    for lo, hi in threshold_windows(T, cfg):
        w = s[lo:hi]
        mu, sd = w.mean(), w.std()
        # population std; sd == 0 gives threshold mu, which nothing exceeds
        mask[lo:hi] |= w > mu + cfg.sigmas * sd
    return mask


def extract_sequences(mask, scores=None) -> list[AnomalousSequence]:
    """Maximal runs of flagged points, each tagged with its peak score."""
    m = np.asarray(mask, dtype=bool)
    s = np.zeros(len(m)) if scores is None else np.asarray(scores, dtype=float)
    if len(s) != len(m):
        raise DataError("mask and scores differ in length")
    padded = np.concatenate([[False], m, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [AnomalousSequence(int(a), int(b), float(s[a:b + 1].max())) for a, b in zip(starts, ends)]


def sequences_to_mask(seqs, length: int) -> np.ndarray:
    mask = np.zeros(length, dtype=bool)
    for seq in seqs:
        mask[seq.start:seq.end + 1] = True
    return mask


def prune(seqs, cfg: PruneConfig = PruneConfig()) -> list[AnomalousSequence]:
    """Drop low-ranked sequences once peak scores stop falling steeply.

    Peaks are ranked in descending order; at the first rank i whose relative
    drop from rank i-1 is at most ``theta``, ranks i and below are removed.
    The survivors keep their original (start-ordered) positions.
    """
    seqs = list(seqs)
    if len(seqs) <= 1:
        return seqs
    peaks = np.array([q.max_score for q in seqs])
    if np.any(peaks <= 0):
        warnings.warn("non-positive peak scores; relative drops undefined, pruning skipped", RuntimeWarning)
        return seqs
    order = np.argsort(-peaks, kind="stable")
    ranked = peaks[order]
    drops = (ranked[:-1] - ranked[1:]) / ranked[:-1]
    small = np.flatnonzero(drops <= cfg.theta)
    if len(small) == 0:
        return seqs
    keep = set(order[: small[0] + 1].tolist())
    return [q for i, q in enumerate(seqs) if i in keep]


def detect(scores, threshold: ThresholdConfig = ThresholdConfig(),
           pruning: PruneConfig | None = PruneConfig()) -> list[AnomalousSequence]:
    s = np.asarray(scores, dtype=float)
    seqs = extract_sequences(adaptive_threshold(s, threshold), s)
    return prune(seqs, pruning) if pruning is not None else seqs
