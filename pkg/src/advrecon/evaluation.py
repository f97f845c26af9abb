"""Window-overlap scoring against labels, and benchmark / ablation runners."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import PipelineConfig
from .errors import AdvreconError, FormatError
from .model import ModelBundle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _bounds(item) -> tuple[float, float]:
    if hasattr(item, "start") and hasattr(item, "end"):
        return item.start, item.end
    start, end = item
    return start, end


def _overlaps(a, b) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def confusion(truth: Iterable, pred: Iterable) -> ConfusionCounts:
    """Closed-interval window matching.

    A labelled window overlapping at least one prediction is a TP, one that
    overlaps none is an FN, and a prediction overlapping no label is an FP.
    """
    truth = [_bounds(t) for t in truth]
    pred = [_bounds(p) for p in pred]
    tp = sum(1 for t in truth if any(_overlaps(t, p) for p in pred))
    fp = sum(1 for p in pred if not any(_overlaps(t, p) for t in truth))
    return ConfusionCounts(tp, fp, len(truth) - tp)


def prf1(counts: ConfusionCounts) -> tuple[float, float, float]:
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class SignalResult:
    dataset: str
    signal: str
    variant: str
    seed: int
    counts: ConfusionCounts
    error: str | None = None

    @property
    def f1(self) -> float:
        return prf1(self.counts)[2]


@dataclass
class EvalReport:
    """Results of one pipeline variant over every signal in a manifest."""

    variant: str
    seed: int
    signals: list[SignalResult] = field(default_factory=list)

    def datasets(self) -> list[str]:
        return sorted({s.dataset for s in self.signals})

    def counts(self, dataset: str) -> ConfusionCounts:
        total = ConfusionCounts()
        for s in self.signals:
            if s.dataset == dataset and s.error is None:
                total = total + s.counts
        return total

    def f1_micro(self, dataset: str) -> float:
        return prf1(self.counts(dataset))[2]

    def f1_macro(self, dataset: str) -> float:
        vals = [s.f1 for s in self.signals if s.dataset == dataset and s.error is None]
        return float(np.mean(vals)) if vals else 0.0

    def gaps(self, dataset: str) -> list[str]:
        return [s.signal for s in self.signals if s.dataset == dataset and s.error is not None]

    def mean_f1(self) -> float:
        ds = self.datasets()
        return float(np.mean([self.f1_micro(d) for d in ds])) if ds else 0.0


# --------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class ManifestEntry:
    dataset: str
    signal_csv: str
    labels_json: str

    @property
    def name(self) -> str:
        return Path(self.signal_csv).stem


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: manifest not found")
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}: invalid JSON ({e.msg})")
    if not isinstance(raw, list):
        raise FormatError(f"{path}: manifest must be a JSON array")
    entries = []
    for n, item in enumerate(raw):
        try:
            sig = Path(item["signal_csv"])
            lab = Path(item["labels_json"])
            # relative paths resolve against the manifest's directory
            entries.append(ManifestEntry(
                str(item["dataset"]),
                str(sig if sig.is_absolute() else path.parent / sig),
                str(lab if lab.is_absolute() else path.parent / lab),
            ))
        except (KeyError, TypeError):
            raise FormatError(f"{path}: entry {n} needs dataset, signal_csv and labels_json")
    return entries


# --------------------------------------------------------------------------
# Runners

FitFn = Callable[..., ModelBundle]


def config_fingerprint(cfg: PipelineConfig) -> str:
    """Short hash of every setting except those that vary across variants or seeds."""
    d = {k: v for k, v in cfg.to_dict().items() if k not in ("fusion", "error", "seed")}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def _variant_configs(cfg: PipelineConfig, variants) -> list[tuple[str, PipelineConfig]]:
    out = []
    for name, error, mode in variants:
        changes = {"fusion": mode}
        if error is not None:
            changes["error"] = error
        out.append((name, cfg.updated(**changes)))
    return out


def _signal_task(entry: ManifestEntry, cfg: PipelineConfig, seed: int, variants, cache_dir,
                 fit_fn: FitFn | None = None) -> list[dict]:
    """Train (or reload) one model and score every variant on one signal."""
    from . import pipeline
    from .signal_io import check_labels, load_labels, load_signal

    fit_fn = fit_fn or pipeline.fit
    cache = Path(cache_dir) / entry.dataset / entry.name / f"seed{seed}" if cache_dir else None
    result_path = cache / "results.json" if cache else None
    wanted = [name for name, *_ in variants]
    if result_path is not None and result_path.exists():
        cached = json.loads(result_path.read_text())
        if all(v in cached for v in wanted):
            return [dict(cached[v], variant=v) for v in wanted]
    else:
        cached = {}

    try:
        ts = load_signal(entry.signal_csv)
        truth = load_labels(entry.labels_json)
        check_labels(truth, ts)
        prepared, norm = pipeline.prepare(ts, cfg)
        model_dir = cache / "model" if cache else None
        if model_dir is not None and (model_dir / "spec.json").exists():
            bundle = ModelBundle.load(model_dir)
        else:
            bundle = fit_fn(prepared, norm, cfg, seed)
            if model_dir is not None:
                bundle.save(model_dir)
        comp = pipeline.score_components(bundle, prepared, cfg)
    except AdvreconError as e:
        logger.warning("%s/%s seed %d failed: %s", entry.dataset, entry.name, seed, e)
        return [{"variant": v, "tp": 0, "fp": 0, "fn": 0, "error": str(e)} for v in wanted]

    results = dict(cached)
    for name, vcfg in _variant_configs(cfg, variants):
        try:
            table = pipeline.scores_for(comp, vcfg)
            seqs = pipeline.find_anomalies(table, vcfg)
            pred = [(prepared.timestamps[q.start], prepared.timestamps[q.end]) for q in seqs]
            c = confusion(truth, pred)
            results[name] = {"tp": c.tp, "fp": c.fp, "fn": c.fn, "error": None}
        except AdvreconError as e:
            logger.warning("%s/%s variant %s failed: %s", entry.dataset, entry.name, name, e)
            results[name] = {"tp": 0, "fp": 0, "fn": 0, "error": str(e)}
    if result_path is not None:
        result_path.parent.mkdir(parents=True, exist_ok=True)
        result_path.write_text(json.dumps(results, indent=1, sort_keys=True) + "\n")
    return [dict(results[v], variant=v) for v in wanted]


def _run(manifest: Sequence[ManifestEntry], cfg: PipelineConfig, seeds, variants, out_dir,
         jobs: int = 1, fit_fn: FitFn | None = None) -> list[EvalReport]:
    seeds = [int(s) for s in seeds]
    cache_dir = Path(out_dir) / "cache" / config_fingerprint(cfg) if out_dir is not None else None
    tasks = [(e, s) for e in manifest for s in seeds]
    if jobs > 1 and fit_fn is None and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_signal_task, e, cfg, s, variants, cache_dir) for e, s in tasks]
            outputs = [f.result() for f in futures]
    else:
        outputs = [_signal_task(e, cfg, s, variants, cache_dir, fit_fn) for e, s in tasks]

    reports = {(name, s): EvalReport(name, s) for name, *_ in variants for s in seeds}
    for (entry, seed), rows in zip(tasks, outputs):
        for row in rows:
            reports[(row["variant"], seed)].signals.append(SignalResult(
                entry.dataset, entry.name, row["variant"], seed,
                ConfusionCounts(row["tp"], row["fp"], row["fn"]), row.get("error")))
    return [reports[(name, s)] for name, *_ in variants for s in seeds]


def run_benchmark(manifest, cfg: PipelineConfig, seeds=(0,), out_dir=None, jobs: int = 1,
                  fit_fn: FitFn | None = None) -> list[EvalReport]:
    """Evaluate the configured pipeline on every signal; one report per seed.

    With ``out_dir`` set, models and per-signal results are cached so an
    interrupted run resumes where it stopped.
    """
    from .pipeline import VARIANTS

    label = next((n for n, e, m in VARIANTS if m == cfg.fusion and (e is None or e == cfg.error)), "custom")
    variants = [(label, None if cfg.fusion == "critic_only" else cfg.error, cfg.fusion)]
    return _run(manifest, cfg, seeds, variants, out_dir, jobs, fit_fn)


def run_ablation(manifest, cfg: PipelineConfig, seeds=(0,), out_dir=None, variants=None, jobs: int = 1,
                 fit_fn: FitFn | None = None) -> list[EvalReport]:
    """Score every variant from one trained model per (signal, seed)."""
    from .pipeline import VARIANTS

    return _run(manifest, cfg, seeds, variants or VARIANTS, out_dir, jobs, fit_fn)


# --------------------------------------------------------------------------
# Report files


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def summary_table(reports: Sequence[EvalReport]) -> tuple[list[str], list[list[str]]]:
    """Rows per variant, one column per dataset (micro F1 averaged over seeds)
    and a final mean±std across datasets."""
    datasets = sorted({d for r in reports for d in r.datasets()})
    variants = list(dict.fromkeys(r.variant for r in reports))
    header = ["variant"] + datasets + ["Mean±Std"]
    rows = []
    for v in variants:
        mine = [r for r in reports if r.variant == v]
        per_ds = [float(np.mean([r.f1_micro(d) for r in mine])) for d in datasets]
        mean = float(np.mean(per_ds)) if per_ds else 0.0
        std = statistics.pstdev(per_ds) if per_ds else 0.0
        rows.append([v] + [_fmt(x) for x in per_ds] + [f"{_fmt(mean)}±{_fmt(std)}"])
    return header, rows


def write_reports(reports: Sequence[EvalReport], out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header, rows = summary_table(reports)
    summary = out_dir / "report.csv"
    with open(summary, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    detail = out_dir / "signals.csv"
    with open(detail, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "signal", "variant", "seed", "tp", "fp", "fn", "precision", "recall", "f1", "error"])
        for r in reports:
            for s in r.signals:
                p, rc, f1 = prf1(s.counts)
                w.writerow([s.dataset, s.signal, s.variant, s.seed, s.counts.tp, s.counts.fp, s.counts.fn,
                            _fmt(p), _fmt(rc), _fmt(f1), s.error or ""])

    datasets_path = out_dir / "datasets.csv"
    with open(datasets_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "variant", "seed", "tp", "fp", "fn", "f1_micro", "f1_macro", "gaps"])
        for r in reports:
            for d in r.datasets():
                c = r.counts(d)
                w.writerow([d, r.variant, r.seed, c.tp, c.fp, c.fn, _fmt(r.f1_micro(d)), _fmt(r.f1_macro(d)),
                            ";".join(r.gaps(d))])
    return {"report": summary, "signals": detail, "datasets": datasets_path}
