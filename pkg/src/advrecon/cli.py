"""Command-line entry point.

Every subcommand accepts the same configuration flags; anything not covered
by a dedicated flag can be set with ``--set key=value`` or a ``--config`` file.
Errors are reported as one JSON object on stderr and mapped to exit codes
1 (configuration), 2 (data) and 3 (training).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from . import evaluation, pipeline, synth
from .config import HELP, PAPER_DEFAULTS, PipelineConfig, load_config
from .errors import AdvreconError, ConfigError, DataError
from .model import ModelBundle
from .signal_io import load_labels, load_signal, write_labels, write_signal

logger = logging.getLogger("advrecon")

# dedicated flags and the config key each one sets
FLAG_KEYS = {
    "seed": "seed",
    "window_size": "window_size",
    "latent_dim": "latent_dim",
    "iterations": "iterations",
    "error": "error",
    "fusion": "fusion",
    "alpha": "alpha",
    "theta": "theta",
}


def _config_epilog() -> str:
    defaults = PipelineConfig().to_dict()
    width = max(map(len, defaults))
    lines = ["configuration keys (default; paper default where one exists):"]
    for key, value in defaults.items():
        paper = PAPER_DEFAULTS.get(key)
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        note = f"  [paper: {paper}]" if paper is not None else ""
        lines.append(f"  {key:<{width}}  {shown:<10} {HELP.get(key, '')}{note}")
    lines.append("set any key with --set key=value or in a --config file (JSON or key = value lines);")
    lines.append("precedence: flags > config file > defaults")
    return "\n".join(lines)


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", type=Path, help="config file (JSON object or key = value lines)")
    g.add_argument("--seed", type=int)
    g.add_argument("--window-size", type=int)
    g.add_argument("--latent-dim", type=int)
    g.add_argument("--iterations", type=int)
    g.add_argument("--error", choices=["point", "area", "dtw"])
    g.add_argument("--fusion", choices=["critic", "error", "convex", "product"])
    g.add_argument("--alpha", type=float)
    g.add_argument("--theta", type=float)
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    epilog = _config_epilog()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="advrecon", description=__doc__.splitlines()[0],
                                     epilog=epilog, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, description=help_, parents=[parent], epilog=epilog,
                              formatter_class=fmt)

    p = add("synth", "write a synthetic signal with injected anomalies and its labels")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--kind", choices=["sine", "square"], default="sine")
    p.add_argument("--layout", choices=["default", "spike"], default="default",
                   help="default: 2 spikes + 3 collective anomalies; spike: one large spike")
    p.add_argument("--period", type=float, default=50.0)
    p.add_argument("--noise", type=float, default=0.05)

    p = add("train", "train a model on one signal and save the bundle")
    p.add_argument("signal", type=Path)
    p.add_argument("--model-dir", type=Path, required=True)

    p = add("detect", "score a signal and write anomalies.json (trains first when --model is omitted)")
    p.add_argument("signal", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--out", type=Path, default=Path("anomalies.json"))
    p.add_argument("--scores", type=Path, help="also write the per-step score table as CSV")

    p = add("evaluate", "compare detected windows with labelled windows")
    p.add_argument("anomalies", type=Path)
    p.add_argument("labels", type=Path)
    p.add_argument("--out", type=Path, help="write the metrics JSON here as well as stdout")

    for name, help_ in (("benchmark", "run the configured pipeline over a manifest of signals"),
                        ("ablate", "score all ten variants from one model per signal")):
        p = add(name, help_)
        p.add_argument("manifest", type=Path)
        p.add_argument("--out-dir", type=Path, required=True)
        p.add_argument("--seeds", type=int, nargs="+", help="defaults to the configured seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return parser


def resolve_config(args) -> PipelineConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


# --------------------------------------------------------------------------
# Commands


def cmd_synth(args, cfg: PipelineConfig) -> None:
    injections = None
    if args.layout == "spike":
        injections = [synth.Injection("spike", args.length // 2, 1, 4.0)]
    ts, labels = synth.generate(args.length, args.kind, args.period, args.noise, cfg.seed, injections)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_signal(ts, args.out_dir / "signal.csv")
    write_labels(labels, args.out_dir / "labels.json")
    manifest = [{"dataset": "synthetic", "signal_csv": "signal.csv", "labels_json": "labels.json"}]
    (args.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def _fit_signal(path: Path, cfg: PipelineConfig) -> ModelBundle:
    ts = load_signal(path)
    prepared, norm = pipeline.prepare(ts, cfg)
    return pipeline.fit(prepared, norm, cfg)


def cmd_train(args, cfg: PipelineConfig) -> None:
    bundle = _fit_signal(args.signal, cfg)
    bundle.save(args.model_dir)


def cmd_detect(args, cfg: PipelineConfig) -> None:
    ts = load_signal(args.signal)
    if args.model is not None:
        bundle = ModelBundle.load(args.model)
        if bundle.network.window_size != cfg.window_size:
            cfg = cfg.updated(window_size=bundle.network.window_size, step_size=bundle.window_config.step_size)
    else:
        prepared, norm = pipeline.prepare(ts, cfg)
        bundle = pipeline.fit(prepared, norm, cfg)
    prepared, table, seqs = pipeline.run_detection(bundle, ts, cfg)
    pipeline.write_anomalies(seqs, prepared.timestamps, args.out)
    if args.scores is not None:
        table.write_csv(args.scores)


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    pred = pipeline.read_anomalies(args.anomalies)
    truth = load_labels(args.labels)
    c = evaluation.confusion(truth, pred)
    p, r, f1 = evaluation.prf1(c)
    text = json.dumps({"tp": c.tp, "fp": c.fp, "fn": c.fn, "precision": p, "recall": r, "f1": f1}, indent=1)
    print(text)
    if args.out is not None:
        args.out.write_text(text + "\n")


def _run_many(args, cfg: PipelineConfig, runner) -> None:
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    manifest = evaluation.load_manifest(args.manifest)
    seeds = args.seeds if args.seeds else [cfg.seed]
    reports = runner(manifest, cfg, seeds=seeds, out_dir=args.out_dir, jobs=args.jobs)
    paths = evaluation.write_reports(reports, args.out_dir)
    print(paths["report"].read_text(encoding="utf-8"), end="")


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "benchmark": lambda a, c: _run_many(a, c, evaluation.run_benchmark),
    "ablate": lambda a, c: _run_many(a, c, evaluation.run_ablation),
}


def _fail(err: AdvreconError) -> int:
    payload = {"error": err.kind, "message": str(err), "exit_code": err.exit_code}
    print(json.dumps(payload), file=sys.stderr)
    return err.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.use_deterministic_algorithms(True)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except AdvreconError as e:
        return _fail(e)
    except FileNotFoundError as e:
        return _fail(DataError(f"{e.filename}: no such file"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
