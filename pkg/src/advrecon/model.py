"""Adversarially trained encoder/decoder for window reconstruction.

Four networks are trained jointly: an encoder ``E`` mapping windows into a
Gaussian latent space, a decoder ``G`` mapping latent vectors back to
windows, and two Wasserstein critics, ``Cx`` on windows and ``Cz`` on latent
vectors. Critics are trained with a gradient penalty; ``E`` and ``G`` are
trained on both adversarial terms plus a forward cycle (reconstruction) loss.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ContractError, DataError, TrainingError
from .signal_io import NormParams, WindowConfig, WindowSet

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "Vx", "Vz", "cycle", "gp_x", "gp_z")
NETWORK_FILES = {
    "encoder": "encoder.pt",
    "decoder": "decoder.pt",
    "critic_x": "critic_x.pt",
    "critic_z": "critic_z.pt",
}


@dataclass(frozen=True)
class LatentConfig:
    latent_dim: int = 20

    def __post_init__(self):
        if int(self.latent_dim) < 1:
            raise ConfigError("latent_dim must be >= 1")


@dataclass(frozen=True)
class NetworkSpec:
    window_size: int = 100
    n_channels: int = 1
    latent_dim: int = 20
    encoder_hidden: int = 100
    decoder_hidden: int = 64
    critic_filters: int = 64
    critic_kernel: int = 5
    dropout: float = 0.2

    def __post_init__(self):
        for name in ("window_size", "n_channels", "latent_dim", "encoder_hidden",
                     "decoder_hidden", "critic_filters", "critic_kernel"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    iterations: int = 2000
    n_critic: int = 5
    learning_rate: float = 0.0005
    gp_weight: float = 10.0
    beta1: float = 0.5
    beta2: float = 0.9

    def __post_init__(self):
        for name in ("batch_size", "iterations", "n_critic"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.learning_rate > 0 or not self.gp_weight > 0:
            raise ConfigError("learning_rate and gp_weight must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")


# --------------------------------------------------------------------------
# Networks


class Encoder(nn.Module):
    """Bidirectional LSTM over the window, flattened into a dense projection to k."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.rnn = nn.LSTM(spec.n_channels, spec.encoder_hidden, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * spec.encoder_hidden * spec.window_size, spec.latent_dim)

    def forward(self, x):
        h, _ = self.rnn(x)
        return self.proj(h.flatten(1))


class Decoder(nn.Module):
    """Two stacked bidirectional LSTMs.

    The latent vector is read as a length-k sequence of scalars by the first
    LSTM; a learned linear map over the time axis stretches those k steps to
    the t steps the second LSTM runs over.
    """

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        h = spec.decoder_hidden
        self.rnn1 = nn.LSTM(1, h, batch_first=True, bidirectional=True)
        self.stretch = nn.Linear(spec.latent_dim, spec.window_size)
        self.rnn2 = nn.LSTM(2 * h, h, batch_first=True, bidirectional=True)
        self.dropout = nn.Dropout(spec.dropout)
        self.out = nn.Linear(2 * h, spec.n_channels)

    def forward(self, z):
        h, _ = self.rnn1(z.unsqueeze(-1))
        h = self.dropout(h)
        h = self.stretch(h.transpose(1, 2)).transpose(1, 2)
        h, _ = self.rnn2(h)
        h = self.dropout(h)
        return torch.tanh(self.out(h))


class CriticX(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.conv = nn.Conv1d(spec.n_channels, spec.critic_filters, spec.critic_kernel, padding="same")
        self.head = nn.Linear(spec.critic_filters * spec.window_size, 1)

    def forward(self, x):
        h = nn.functional.leaky_relu(self.conv(x.transpose(1, 2)), 0.2)
        return self.head(h.flatten(1)).squeeze(-1)


class CriticZ(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        kernel = min(spec.critic_kernel, spec.latent_dim)
        kernel -= 1 - kernel % 2  # odd, so 'same' padding stays symmetric
        self.conv = nn.Conv1d(1, spec.critic_filters, kernel, padding="same")
        self.head = nn.Linear(spec.critic_filters * spec.latent_dim, 1)

    def forward(self, z):
        h = nn.functional.leaky_relu(self.conv(z.unsqueeze(1)), 0.2)
        return self.head(h.flatten(1)).squeeze(-1)


def build_networks(spec: NetworkSpec, dtype=torch.float32):
    """Return freshly initialised ``(encoder, decoder, critic_x, critic_z)``."""
    return tuple(net.to(dtype) for net in (Encoder(spec), Decoder(spec), CriticX(spec), CriticZ(spec)))


# --------------------------------------------------------------------------
# Sampling and inference


def _generator(seed) -> torch.Generator | None:
    if seed is None or isinstance(seed, torch.Generator):
        return seed
    return torch.Generator().manual_seed(int(seed))


def sample_latent(n: int, cfg: LatentConfig | int = LatentConfig(), seed=None, dtype=torch.float32):
    """Draw an ``n x k`` batch of i.i.d. standard normal latent vectors."""
    if int(n) < 1:
        raise ContractError("sample_latent needs n >= 1")
    k = cfg.latent_dim if isinstance(cfg, LatentConfig) else int(cfg)
    return torch.randn(int(n), k, generator=_generator(seed), dtype=dtype)


def _param_dtype(net: nn.Module):
    return next(net.parameters()).dtype


def _as_batch(window, net: nn.Module, tail_shape: tuple[int, ...], what: str):
    x = torch.as_tensor(np.asarray(window) if not torch.is_tensor(window) else window)
    single = x.dim() == len(tail_shape)
    if single:
        x = x.unsqueeze(0)
    if x.dim() != len(tail_shape) + 1 or tuple(x.shape[1:]) != tail_shape or x.shape[0] == 0:
        raise ContractError(f"{what}: expected shape {tail_shape} or (N, *{tail_shape}), got {tuple(x.shape)}")
    return x.to(_param_dtype(net)), single


@torch.no_grad()
def _run(net: nn.Module, x: torch.Tensor, batch: int = 512) -> torch.Tensor:
    was_training = net.training
    net.eval()
    try:
        return torch.cat([net(x[i:i + batch]) for i in range(0, x.shape[0], batch)])
    finally:
        net.train(was_training)


def encode(encoder: Encoder, window) -> np.ndarray:
    """Map a ``t x M`` window (or an ``N x t x M`` batch) to latent vectors."""
    rnn = encoder.rnn
    t = encoder.proj.in_features // (2 * rnn.hidden_size)
    x, single = _as_batch(window, encoder, (t, rnn.input_size), "encode")
    out = _run(encoder, x).numpy()
    return out[0] if single else out


def decode(decoder: Decoder, z) -> np.ndarray:
    k = decoder.stretch.in_features
    x, single = _as_batch(z, decoder, (k,), "decode")
    out = _run(decoder, x).numpy()
    return out[0] if single else out


def reconstruct(encoder: Encoder, decoder: Decoder, window) -> np.ndarray:
    return decode(decoder, encode(encoder, window))


def critic_scores(critic: nn.Module, batch) -> np.ndarray:
    x = torch.as_tensor(np.asarray(batch)).to(_param_dtype(critic))
    if x.dim() < 2 or x.shape[0] == 0:
        raise ContractError("critic_scores expects a non-empty batch")
    return _run(critic, x).numpy()


# --------------------------------------------------------------------------
# Objectives

Critic = Callable[[torch.Tensor], torch.Tensor]


def wasserstein_objective_x(critic_x: Critic, decoder: Callable, real_batch, z_batch):
    """mean Cx(x) - mean Cx(G(z))"""
    return critic_x(real_batch).mean() - critic_x(decoder(z_batch)).mean()


def wasserstein_objective_z(critic_z: Critic, encoder: Callable, z_batch, real_batch):
    """mean Cz(z) - mean Cz(E(x))"""
    return critic_z(z_batch).mean() - critic_z(encoder(real_batch)).mean()


def cycle_loss(encoder: Callable, decoder: Callable, real_batch):
    """Batch mean of the L2 norm of ``x - G(E(x))`` over each flattened window."""
    diff = real_batch - decoder(encoder(real_batch))
    return torch.linalg.vector_norm(diff.flatten(1), dim=1).mean()


def gradient_penalty(critic: Critic, real_batch, fake_batch, seed=None):
    """Mean of ``(||grad critic(x_interp)||_2 - 1)^2`` over uniform interpolates.

    The graph is kept so the result can be back-propagated into the critic.
    """
    if real_batch.shape != fake_batch.shape:
        raise ContractError("gradient_penalty needs real and fake batches of equal shape")
    n = real_batch.shape[0]
    eps_shape = (n,) + (1,) * (real_batch.dim() - 1)
    eps = torch.rand(eps_shape, generator=_generator(seed), dtype=real_batch.dtype)
    interp = (eps * real_batch.detach() + (1 - eps) * fake_batch.detach()).requires_grad_(True)
    out = critic(interp)
    if torch.is_tensor(out) and out.requires_grad:
        (grad,) = torch.autograd.grad(out.sum(), interp, create_graph=True, allow_unused=True)
    else:
        grad = None
    if grad is None:
        grad = torch.zeros_like(interp)
    norms = torch.linalg.vector_norm(grad.flatten(1), dim=1)
    return ((norms - 1.0) ** 2).mean()


def full_objective(encoder, decoder, critic_x, critic_z, real_batch, z_batch):
    """Sum of both Wasserstein terms and the cycle loss (no penalties)."""
    return (
        wasserstein_objective_x(critic_x, decoder, real_batch, z_batch)
        + wasserstein_objective_z(critic_z, encoder, z_batch, real_batch)
        + cycle_loss(encoder, decoder, real_batch)
    )


# --------------------------------------------------------------------------
# Bundle


@dataclass
class ModelBundle:
    encoder: Encoder
    decoder: Decoder
    critic_x: CriticX
    critic_z: CriticZ
    network: NetworkSpec
    train_config: TrainConfig
    window_config: WindowConfig
    norm_params: NormParams | None = None
    seed: int = 0
    training_log: list[tuple] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def networks(self) -> dict[str, nn.Module]:
        return {"encoder": self.encoder, "decoder": self.decoder,
                "critic_x": self.critic_x, "critic_z": self.critic_z}

    def encode(self, windows):
        return encode(self.encoder, windows)

    def decode(self, z):
        return decode(self.decoder, z)

    def reconstruct(self, windows):
        return reconstruct(self.encoder, self.decoder, windows)

    def critic_x_scores(self, windows) -> np.ndarray:
        return critic_scores(self.critic_x, windows)

    def critic_z_scores(self, z) -> np.ndarray:
        return critic_scores(self.critic_z, z)

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "network": asdict(self.network),
            "train": asdict(self.train_config),
            "window": asdict(self.window_config),
            "latent": asdict(LatentConfig(self.network.latent_dim)),
            "norm_params": self.norm_params.to_dict() if self.norm_params else None,
            "seed": self.seed,
            "extra": self.extra,
        }
        (directory / "spec.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        for name, net in self.networks.items():
            torch.save(net.state_dict(), directory / NETWORK_FILES[name])
        with open(directory / "training_log.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for row in self.training_log:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return directory

    @classmethod
    def load(cls, directory) -> ModelBundle:
        directory = Path(directory)
        try:
            meta = json.loads((directory / "spec.json").read_text())
        except FileNotFoundError:
            raise DataError(f"{directory}: not a model bundle (spec.json missing)")
        spec = NetworkSpec(**meta["network"])
        nets = build_networks(spec)
        for name, net in zip(NETWORK_FILES, nets):
            state = torch.load(directory / NETWORK_FILES[name], weights_only=True)
            net.load_state_dict(state)
            net.eval()
        log = []
        log_path = directory / "training_log.csv"
        if log_path.exists():
            with open(log_path, newline="") as f:
                rows = list(csv.reader(f))[1:]
            log = [(int(r[0]), *map(float, r[1:])) for r in rows]
        norm = meta.get("norm_params")
        return cls(
            *nets,
            network=spec,
            train_config=TrainConfig(**meta["train"]),
            window_config=WindowConfig(**meta["window"]),
            norm_params=NormParams.from_dict(norm) if norm else None,
            seed=int(meta.get("seed", 0)),
            training_log=log,
            extra=meta.get("extra", {}),
        )


# --------------------------------------------------------------------------
# Training


def _set_grad(nets, flag: bool) -> None:
    for net in nets:
        for p in net.parameters():
            p.requires_grad_(flag)


class AdversarialTrainer:
    """Networks plus optimiser state for the alternating updates.

    Critics ascend ``V - gp_weight * gp`` (implemented as descent on the
    negation); encoder and decoder descend ``Vx + Vz + cycle``.
    """

    def __init__(self, net: NetworkSpec, cfg: TrainConfig, seed: int = 0, dtype=torch.float32):
        torch.manual_seed(seed)
        self.spec = net
        self.cfg = cfg
        self.rng = torch.Generator().manual_seed(seed)
        self.encoder, self.decoder, self.critic_x, self.critic_z = build_networks(net, dtype)
        adam = lambda params: torch.optim.Adam(params, lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2))
        self.opt_cx = adam(self.critic_x.parameters())
        self.opt_cz = adam(self.critic_z.parameters())
        self.opt_eg = adam(list(self.encoder.parameters()) + list(self.decoder.parameters()))

    @property
    def generators(self):
        return self.encoder, self.decoder

    @property
    def critics(self):
        return self.critic_x, self.critic_z

    def critic_step(self, x, z) -> tuple[float, float, float, float]:
        """One update of each critic; returns (Vx, Vz, gp_x, gp_z)."""
        E, G = self.generators
        Cx, Cz = self.critics
        lam = float(self.cfg.gp_weight)
        _set_grad((E, G), False)
        _set_grad((Cx, Cz), True)
        with torch.no_grad():
            x_fake = G(z)
            z_fake = E(x)

        vx = Cx(x).mean() - Cx(x_fake).mean()
        gpx = gradient_penalty(Cx, x, x_fake, self.rng)
        self.opt_cx.zero_grad(set_to_none=True)
        (-vx + lam * gpx).backward()
        self.opt_cx.step()

        vz = Cz(z).mean() - Cz(z_fake).mean()
        gpz = gradient_penalty(Cz, z, z_fake, self.rng)
        self.opt_cz.zero_grad(set_to_none=True)
        (-vz + lam * gpz).backward()
        self.opt_cz.step()
        return vx.item(), vz.item(), gpx.item(), gpz.item()

    def generator_step(self, x, z) -> tuple[float, float, float]:
        """One joint encoder/decoder update; returns (Vx, Vz, cycle)."""
        E, G = self.generators
        Cx, Cz = self.critics
        _set_grad((Cx, Cz), False)
        _set_grad((E, G), True)
        vx = wasserstein_objective_x(Cx, G, x, z)
        vz = wasserstein_objective_z(Cz, E, z, x)
        cyc = cycle_loss(E, G, x)
        self.opt_eg.zero_grad(set_to_none=True)
        (vx + vz + cyc).backward()
        self.opt_eg.step()
        return vx.item(), vz.item(), cyc.item()

    def finish(self) -> None:
        nets = self.generators + self.critics
        _set_grad(nets, True)
        for net in nets:
            net.eval()


def train(
    windows: WindowSet | np.ndarray,
    net: NetworkSpec,
    cfg: TrainConfig,
    seed: int = 0,
    *,
    norm_params: NormParams | None = None,
    window_config: WindowConfig | None = None,
    callback: Callable[[int, tuple], None] | None = None,
) -> ModelBundle:
    """Run the alternating critic / generator optimisation.

    Each outer iteration performs ``n_critic`` updates of both critics
    followed by one joint update of encoder and decoder. Minibatches are drawn
    without replacement within a batch. Results are a deterministic function
    of ``seed``.
    """
    data = windows.windows if isinstance(windows, WindowSet) else np.asarray(windows)
    if data.ndim != 3 or data.shape[1:] != (net.window_size, net.n_channels):
        raise ContractError(
            f"training windows must be (N, {net.window_size}, {net.n_channels}); got {data.shape}"
        )
    N = data.shape[0]
    m = int(cfg.batch_size)
    if N < m:
        raise ConfigError(f"need at least batch_size={m} windows, got {N}")
    if window_config is None:
        window_config = WindowConfig(net.window_size, 1)

    trainer = AdversarialTrainer(net, cfg, seed)
    rng = trainer.rng
    X = torch.as_tensor(data, dtype=torch.float32)
    k = net.latent_dim

    def batch():
        idx = torch.randperm(N, generator=rng)[:m]
        return X[idx], torch.randn(m, k, generator=rng)

    for module in trainer.generators + trainer.critics:
        module.train()
    log = []
    for it in range(int(cfg.iterations)):
        acc = np.zeros(4)
        for _ in range(int(cfg.n_critic)):
            acc += trainer.critic_step(*batch())
        acc /= int(cfg.n_critic)
        _, _, cyc = trainer.generator_step(*batch())

        row = (it, float(acc[0]), float(acc[1]), cyc, float(acc[2]), float(acc[3]))
        if not all(math.isfinite(v) for v in row[1:]):
            raise TrainingError(f"non-finite loss at iteration {it}: " + ", ".join(
                f"{c}={v}" for c, v in zip(LOG_COLUMNS[1:], row[1:])))
        log.append(row)
        if callback is not None:
            callback(it, row)
        if it % 100 == 0:
            logger.debug("iter %d Vx=%.4f Vz=%.4f cycle=%.4f", it, row[1], row[2], row[3])

    trainer.finish()
    E, G = trainer.generators
    Cx, Cz = trainer.critics
    for module in (E, G, Cx, Cz):
        if not all(torch.isfinite(p).all() for p in module.parameters()):
            raise TrainingError("non-finite parameter after training")
    return ModelBundle(E, G, Cx, Cz, network=net, train_config=cfg, window_config=window_config,
                       norm_params=norm_params, seed=int(seed), training_log=log)
