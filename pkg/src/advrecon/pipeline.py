"""End-to-end composition: prepare a signal, fit a model, score and detect."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import scoring
from .config import PipelineConfig
from .detection import AnomalousSequence, detect
from .errors import DataError, FormatError
from .model import ModelBundle, train
from .scoring import ErrorConfig, FusionConfig
from .signal_io import (
    NormParams,
    TimeSeries,
    WindowConfig,
    WindowSet,
    aggregate,
    detrend,
    make_windows,
    normalize,
)

SCORE_COLUMNS = ("index", "x", "x_hat", "err", "critic_raw", "critic_smoothed", "z_re", "z_c", "fused")

# Ten scoring variants compared in ablations: (name, error method, fusion mode)
VARIANTS = (
    ("critic", None, "critic_only"),
    ("point", "point", "error_only"),
    ("area", "area", "error_only"),
    ("dtw", "dtw", "error_only"),
    ("critic+point", "point", "convex"),
    ("critic+area", "area", "convex"),
    ("critic+dtw", "dtw", "convex"),
    ("critic*point", "point", "product"),
    ("critic*area", "area", "product"),
    ("critic*dtw", "dtw", "product"),
)


def prepare(ts: TimeSeries, cfg: PipelineConfig) -> tuple[TimeSeries, NormParams]:
    """Resample to uniform spacing, optionally detrend, then scale to [-1, 1]."""
    target = min(cfg.target_length, ts.length)
    if ts.length > target or not ts.is_uniform():
        ts = aggregate(ts, target)
    if cfg.detrend:
        ts = detrend(ts)
    return normalize(ts)


def inference_windows(ts: TimeSeries, cfg: WindowConfig) -> WindowSet:
    """Sliding windows that cover every step, including the series tail."""
    ws = make_windows(ts, cfg)
    last = ts.length - cfg.window_size
    if ws.start_indices[-1] != last:
        starts = np.append(ws.start_indices, last)
        windows = np.concatenate([ws.windows, ts.values[None, last:]], axis=0)
        ws = WindowSet(windows, starts)
    return ws


def fit(prepared: TimeSeries, norm: NormParams | None, cfg: PipelineConfig, seed: int | None = None) -> ModelBundle:
    seed = cfg.seed if seed is None else seed
    ws = make_windows(prepared, cfg.window_config())
    if cfg.train_fraction < 1:
        n = max(cfg.batch_size, int(len(ws) * cfg.train_fraction))
        ws = WindowSet(ws.windows[:n], ws.start_indices[:n])
    bundle = train(ws, cfg.network_spec(prepared.n_channels), cfg.train_config(), seed,
                   norm_params=norm, window_config=cfg.window_config())
    bundle.extra = {"target_length": cfg.target_length, "detrend": cfg.detrend}
    return bundle


@dataclass
class ScoreComponents:
    """Model outputs on the timeline, shared by every scoring variant."""

    x: np.ndarray
    x_hat: np.ndarray
    critic_raw: np.ndarray
    critic_smoothed: np.ndarray


def score_components(bundle: ModelBundle, prepared: TimeSeries, cfg: PipelineConfig) -> ScoreComponents:
    ws = inference_windows(prepared, cfg.window_config())
    T = prepared.length
    recon = bundle.reconstruct(ws.windows)
    x_hat = scoring.aggregate_reconstructions(scoring.collect(recon, ws.start_indices, T))
    crit = bundle.critic_x_scores(ws.windows)
    coll = scoring.collect(crit, ws.start_indices, T, window_size=ws.window_size)
    return ScoreComponents(
        x=np.array(prepared.values),
        x_hat=x_hat,
        critic_raw=np.nanmean(coll, axis=1),
        critic_smoothed=scoring.smooth_critic(coll, cfg.critic_smoothing),
    )


@dataclass
class ScoreTable:
    x: np.ndarray
    x_hat: np.ndarray
    err: np.ndarray
    critic_raw: np.ndarray
    critic_smoothed: np.ndarray
    z_re: np.ndarray
    z_c: np.ndarray
    fused: np.ndarray

    def write_csv(self, path) -> None:
        M = self.x.shape[1]
        xs = ("x",) if M == 1 else tuple(f"x_{c + 1}" for c in range(M))
        xh = ("x_hat",) if M == 1 else tuple(f"x_hat_{c + 1}" for c in range(M))
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("index",) + xs + xh + SCORE_COLUMNS[3:])
            for i in range(len(self.fused)):
                row = [*self.x[i], *self.x_hat[i], self.err[i], self.critic_raw[i],
                       self.critic_smoothed[i], self.z_re[i], self.z_c[i], self.fused[i]]
                w.writerow([i] + [repr(float(v)) for v in row])


def variant_scores(comp: ScoreComponents, error: ErrorConfig | None, fusion: FusionConfig) -> ScoreTable:
    T = len(comp.critic_smoothed)
    z_c = scoring.zscore(comp.critic_smoothed, "low_is_anomalous")
    if error is None:
        err = np.full(T, np.nan)
        z_re = np.full(T, np.nan)
    else:
        err = scoring.reconstruction_error(comp.x, comp.x_hat, error)
        z_re = scoring.zscore(err, "high_is_anomalous")
    fused = z_c.copy() if fusion.mode == "critic_only" else scoring.fuse(z_re, z_c, fusion)
    return ScoreTable(comp.x, comp.x_hat, err, comp.critic_raw, comp.critic_smoothed, z_re, z_c, fused)


def scores_for(comp: ScoreComponents, cfg: PipelineConfig) -> ScoreTable:
    error = None if cfg.fusion == "critic_only" else cfg.error_config()
    return variant_scores(comp, error, cfg.fusion_config())


def find_anomalies(table: ScoreTable, cfg: PipelineConfig) -> list[AnomalousSequence]:
    return detect(table.fused, cfg.threshold_config(), cfg.prune_config())


def run_detection(bundle: ModelBundle, ts: TimeSeries, cfg: PipelineConfig):
    """Score a raw series with a trained bundle.

    Returns the prepared series, its score table and the detected sequences.
    """
    prepared = prepare_with_bundle(ts, bundle, cfg)
    table = scores_for(score_components(bundle, prepared, cfg), cfg)
    return prepared, table, find_anomalies(table, cfg)


def prepare_with_bundle(ts: TimeSeries, bundle: ModelBundle, cfg: PipelineConfig) -> TimeSeries:
    """Prepare a series for scoring, reusing the bundle's scaling when it has one."""
    target = min(int(bundle.extra.get("target_length", cfg.target_length)), ts.length)
    if ts.length > target or not ts.is_uniform():
        ts = aggregate(ts, target)
    if bundle.extra.get("detrend", cfg.detrend):
        ts = detrend(ts)
    if bundle.norm_params is None:
        return normalize(ts)[0]
    lo = np.asarray(bundle.norm_params.minimum)
    hi = np.asarray(bundle.norm_params.maximum)
    return ts.with_values(2.0 * (ts.values - lo) / (hi - lo) - 1.0)


def anomalies_to_json(seqs, timestamps) -> list[dict]:
    out = []
    for q in seqs:
        out.append({
            "start": int(q.start),
            "end": int(q.end),
            "score": float(q.max_score),
            "start_time": _plain(timestamps[q.start]),
            "end_time": _plain(timestamps[q.end]),
        })
    return out


def _plain(x):
    if isinstance(x, (np.integer, int)):
        return int(x)
    x = float(x)
    return int(x) if x.is_integer() else x


def write_anomalies(seqs, timestamps, path) -> None:
    Path(path).write_text(json.dumps(anomalies_to_json(seqs, timestamps), indent=1) + "\n")


def read_anomalies(path) -> list[tuple[float, float]]:
    """Predicted windows as ``(start_time, end_time)`` pairs."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}: invalid JSON ({e.msg})")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file")
    if not isinstance(raw, list):
        raise FormatError(f"{path}: expected a JSON array")
    out = []
    for n, item in enumerate(raw):
        try:
            if "start_time" in item:
                out.append((item["start_time"], item["end_time"]))
            else:
                out.append((item["start"], item["end"]))
        except (TypeError, KeyError):
            raise FormatError(f"{path}: entry {n} lacks start/end fields")
    return out
