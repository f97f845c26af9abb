"""Flat pipeline configuration: defaults, file loading and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .detection import PruneConfig, ThresholdConfig
from .errors import AdvreconError, ConfigError
from .model import LatentConfig, NetworkSpec, TrainConfig
from .scoring import ErrorConfig, FusionConfig
from .signal_io import WindowConfig

# keys whose defaults come from the published method; shown in --help
PAPER_DEFAULTS = {
    "window_size": 100,
    "step_size": 1,
    "latent_dim": 20,
    "encoder_hidden": 100,
    "decoder_hidden": 64,
    "batch_size": 64,
    "iterations": 2000,
    "alpha": 0.5,
    "product_scale": 1.0,
    "window_fraction": "1/3",
    "step_fraction": "1/30",
    "sigmas": 4.0,
    "theta": 0.1,
}

HELP = {
    "window_size": "sliding window length t",
    "step_size": "sliding window step s",
    "target_length": "resample to this many equally spaced points (capped at T)",
    "detrend": "subtract a least-squares line before scaling",
    "latent_dim": "latent dimension k",
    "encoder_hidden": "encoder LSTM units per direction",
    "decoder_hidden": "decoder LSTM units per direction (both layers)",
    "critic_filters": "convolution filters in each critic",
    "critic_kernel": "convolution kernel width in each critic",
    "dropout": "decoder dropout rate",
    "batch_size": "minibatch size m",
    "iterations": "outer training iterations",
    "n_critic": "critic updates per generator update",
    "learning_rate": "adam step size",
    "gp_weight": "gradient penalty weight",
    "beta1": "adam beta1",
    "beta2": "adam beta2",
    "error": "reconstruction error: point | area | dtw",
    "half_window": "half width l of the area / dtw segment",
    "fusion": "score fusion: critic_only | error_only | convex | product",
    "alpha": "convex weight on the reconstruction z-score",
    "product_scale": "scale applied to the product of z-scores",
    "critic_smoothing": "per-step critic collapse: kde_mode | max | median",
    "window_fraction": "threshold window as a fraction of T",
    "step_fraction": "threshold window step as a fraction of T",
    "sigmas": "threshold = mean + sigmas * std of the window",
    "theta": "pruning: minimum relative drop between ranked peaks",
    "prune": "apply false-positive pruning",
    "train_fraction": "train on this leading fraction of windows, score the full series",
    "seed": "random seed for every stochastic step",
}


@dataclass(frozen=True)
class PipelineConfig:
    window_size: int = 100
    step_size: int = 1
    target_length: int = 10000
    detrend: bool = False
    latent_dim: int = 20
    encoder_hidden: int = 100
    decoder_hidden: int = 64
    critic_filters: int = 64
    critic_kernel: int = 5
    dropout: float = 0.2
    batch_size: int = 64
    iterations: int = 2000
    n_critic: int = 5
    learning_rate: float = 0.0005
    gp_weight: float = 10.0
    beta1: float = 0.5
    beta2: float = 0.9
    error: str = "dtw"
    half_window: int = 10
    fusion: str = "product"
    alpha: float = 0.5
    product_scale: float = 1.0
    critic_smoothing: str = "kde_mode"
    window_fraction: float = 1 / 3
    step_fraction: float = 1 / 30
    sigmas: float = 4.0
    theta: float = 0.1
    prune: bool = True
    train_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.target_length < 2:
            raise ConfigError("target_length must be at least 2")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if self.critic_smoothing not in ("kde_mode", "max", "median"):
            raise ConfigError("critic_smoothing must be kde_mode, max or median")
        # building each sub-config runs its own validation
        self.window_config()
        self.latent_config()
        self.network_spec()
        self.train_config()
        self.error_config()
        self.fusion_config()
        self.threshold_config()
        self.prune_config()

    def window_config(self) -> WindowConfig:
        return WindowConfig(self.window_size, self.step_size)

    def latent_config(self) -> LatentConfig:
        return LatentConfig(self.latent_dim)

    def network_spec(self, n_channels: int = 1) -> NetworkSpec:
        return NetworkSpec(
            window_size=self.window_size, n_channels=n_channels, latent_dim=self.latent_dim,
            encoder_hidden=self.encoder_hidden, decoder_hidden=self.decoder_hidden,
            critic_filters=self.critic_filters, critic_kernel=self.critic_kernel, dropout=self.dropout,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, iterations=self.iterations, n_critic=self.n_critic,
            learning_rate=self.learning_rate, gp_weight=self.gp_weight, beta1=self.beta1, beta2=self.beta2,
        )

    def error_config(self) -> ErrorConfig:
        return ErrorConfig(self.error, self.half_window)

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(self.fusion, self.alpha, self.product_scale)

    def threshold_config(self) -> ThresholdConfig:
        return ThresholdConfig(self.window_fraction, self.step_fraction, self.sigmas)

    def prune_config(self) -> PruneConfig | None:
        return PruneConfig(self.theta) if self.prune else None

    def to_dict(self) -> dict:
        return asdict(self)

    def updated(self, **changes) -> PipelineConfig:
        return from_mapping(changes, base=self)


FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
FUSION_ALIASES = {"critic": "critic_only", "error": "error_only"}


def _coerce(key: str, value):
    kind = FIELD_TYPES[key]
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            if isinstance(value, str) and "/" in value:
                num, den = value.split("/", 1)
                return float(num) / float(den)
            return float(value)
        value = str(value).strip()
        if key == "fusion":
            value = FUSION_ALIASES.get(value, value)
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot interpret {value!r} as {kind}")


def from_mapping(mapping: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    unknown = sorted(set(mapping) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    changes = {k: _coerce(k, v) for k, v in mapping.items()}
    try:
        return replace(base or PipelineConfig(), **changes)
    except AdvreconError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))


def read_config_file(path) -> dict:
    """Parse a JSON object or ``key = value`` lines (``#`` starts a comment)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}: invalid JSON ({e.msg})")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return data
    data = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        data[key] = value
    return data


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Built-in defaults, then the config file, then explicit overrides."""
    cfg = PipelineConfig()
    if path is not None:
        cfg = from_mapping(read_config_file(path), base=cfg)
    if overrides:
        cfg = from_mapping(overrides, base=cfg)
    return cfg
