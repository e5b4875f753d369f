"""Training loops for both engines."""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import Checkpoint
from .denoise import ddpm_loss, mdm_loss
from .nn import SGD, Adam, ArchSpec, TinyDenoiser
from .rng import substream
from .schedules import make_schedule

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    optimizer: str = "adam"
    lr: float = 2e-3
    momentum: float = 0.9
    grad_clip: float | None = 1.0
    cond_dropout: float = 0.1
    seed: int = 0
    T: int = 100
    schedule: str | None = None  # default: linear for ddpm, cosine for mdm
    beta_min: float | None = None  # default: 1e-4 scaled by 1000 / T
    beta_max: float | None = None  # default: 0.02 scaled by 1000 / T
    channels: int = 16
    channel_mults: tuple = (1, 2, 2)
    emb_dim: int = 32
    prediction: str = "eps"
    ce_weight: float = 0.0
    dtype: str = "float32"

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.cond_dropout <= 1.0:
            raise ValueError("cond_dropout must lie in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def linear_betas(cfg: TrainConfig) -> tuple[float, float]:
    """Explicit betas win; otherwise the 1000-step range is stretched so short chains still end near pure noise."""
    scale = max(1.0, 1000.0 / cfg.T)
    lo = cfg.beta_min if cfg.beta_min is not None else 1e-4 * scale
    hi = cfg.beta_max if cfg.beta_max is not None else min(0.02 * scale, 0.999)
    return lo, hi


def schedule_for(engine: str, cfg: TrainConfig):
    kind = cfg.schedule or ("linear" if engine == "ddpm" else "cosine")
    return make_schedule(kind, cfg.T, *linear_betas(cfg))


def arch_for(engine: str, M: int, H: int, W: int, cfg: TrainConfig) -> ArchSpec:
    K = M + 1
    channels = M if engine == "ddpm" else K
    return ArchSpec(
        engine=engine, in_channels=channels, out_channels=channels, H=H, W=W,
        channels=cfg.channels, channel_mults=tuple(cfg.channel_mults), emb_dim=cfg.emb_dim,
        prediction=cfg.prediction if engine == "ddpm" else "logits", dtype=cfg.dtype,
    )


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def train(dataset, engine: str, cfg: TrainConfig) -> Checkpoint:
    """Adam (or momentum SGD) over the train split with condition dropout.

    The condition is the annotated (w/W, h/H); each item's condition is
    replaced by the null token with probability ``cfg.cond_dropout``.
    """
    cfg.validate()
    if engine not in ("ddpm", "mdm"):
        raise ValueError(f"unknown engine {engine!r}")
    train_idx = np.asarray(dataset.train_idx)
    if train_idx.size == 0:
        raise ValueError("dataset has no training samples")
    M, H, W = dataset.config.M, dataset.config.H, dataset.config.W
    K = M + 1
    schedule = schedule_for(engine, cfg)
    arch = arch_for(engine, M, H, W, cfg)
    net = TinyDenoiser(arch, substream(cfg.seed, "init"))
    if cfg.optimizer == "adam":
        opt = Adam(net.parameters(), cfg.lr, clip=cfg.grad_clip)
    else:
        opt = SGD(net.parameters(), cfg.lr, cfg.momentum, cfg.grad_clip)
    dims = np.array([d.normalized(H, W) for d in dataset.dims], dtype=np.float64)

    trace, dropped_count = [], 0
    for epoch in range(cfg.epochs):
        order = substream(cfg.seed, "shuffle", epoch).permutation(train_idx)
        losses = []
        for b, start in enumerate(range(0, order.size, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            rng = substream(cfg.seed, "batch", epoch, b)
            dropped = rng.random(idx.size) < cfg.cond_dropout
            dropped_count += int(dropped.sum())
            cond = dims[idx]
            if engine == "ddpm":
                batch = dataset.stacks(idx)
                res = ddpm_loss(batch, net, schedule, rng, cond, dropped)
            else:
                batch = np.stack([dataset.fields[i] for i in idx])
                res = mdm_loss(batch, net, schedule, rng, K, cond, dropped, ce_weight=cfg.ce_weight)
            if not math.isfinite(res.loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b} (t={res.t.tolist()}, lr={cfg.lr})"
                )
            opt.step(res.grads)
            losses.append(res.loss)
        trace.append(float(np.mean(losses)))
        log.info("epoch %d loss %.6f", epoch, trace[-1])

    return Checkpoint(
        engine=engine, arch=arch, schedule=schedule,
        params={k: v.copy() for k, v in net.parameters().items()},
        seed=cfg.seed, train_config=_plain(asdict(cfg)), loss_trace=trace, dropped_count=dropped_count,
    )
