"""Noise schedules shared by both engines, and the component-masking curriculum."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise rates for t = 1..T.

    ``alpha_bar`` has T+1 entries with ``alpha_bar[0] == 1`` so that it can be
    indexed directly by timestep; ``betas``/``alphas`` are indexed by ``t - 1``.
    """

    betas: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie in (0, 1)")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        alpha_bar = np.cumprod(np.concatenate([[1.0], 1.0 - betas]))
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def T(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    def beta(self, t):
        self.check_t(t, lo=1)
        return self.betas[np.asarray(t) - 1]

    def alpha(self, t):
        return 1.0 - self.beta(t)

    def check_t(self, t, lo: int = 0) -> None:
        t = np.asarray(t)
        if np.any(t < lo) or np.any(t > self.T):
            raise ValueError(f"timestep outside [{lo}, {self.T}]")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T, "betas": [float(b) for b in self.betas]}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return cls(np.asarray(d["betas"], dtype=np.float64), kind=d.get("kind", "custom"))


def linear_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    return NoiseSchedule(np.linspace(beta_min, beta_max, T), kind="linear")


def cosine_schedule(T: int, s: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    """Squared-cosine alpha_bar; betas clipped to ``max_beta``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    steps = np.arange(T + 1, dtype=np.float64) / T
    f = np.cos((steps + s) / (1.0 + s) * math.pi / 2.0) ** 2
    betas = np.clip(1.0 - f[1:] / f[:-1], 1e-8, max_beta)
    return NoiseSchedule(betas, kind="cosine")


def make_schedule(kind: str, T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    if kind == "linear":
        return linear_schedule(T, beta_min, beta_max)
    if kind == "cosine":
        return cosine_schedule(T)
    raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass(frozen=True)
class MaskCurriculum:
    cap: float = 0.7
    ramp_epochs: int = 20

    def __post_init__(self):
        if not 0.0 <= self.cap <= 1.0:
            raise ValueError("cap must lie in [0, 1]")
        if self.ramp_epochs < 1:
            raise ValueError("ramp_epochs must be >= 1")


def masking_probability(curriculum: MaskCurriculum, epoch: int) -> float:
    """Linear ramp from 0 to ``cap`` over ``ramp_epochs``, flat afterwards."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return curriculum.cap * min(1.0, epoch / curriculum.ramp_epochs)


def apply_component_mask(stack, keep_index: int, rng=None) -> np.ndarray:
    """Zero every component except ``keep_index`` (0-based channel).

    ``rng`` is accepted for call-site symmetry with :func:`random_component_mask`.
    """
    stack = np.asarray(stack)
    if not 0 <= keep_index < stack.shape[0]:
        raise ValueError(f"keep_index {keep_index} out of range for M={stack.shape[0]}")
    out = np.zeros_like(stack)
    out[keep_index] = stack[keep_index]
    return out


def random_component_mask(stack, curriculum: MaskCurriculum, epoch: int, rng) -> tuple[np.ndarray, int | None]:
    """Bernoulli(p_e) draw; on success keep one uniformly chosen component."""
    if rng.random() < masking_probability(curriculum, epoch):
        keep = int(rng.integers(np.asarray(stack).shape[0]))
        return apply_component_mask(stack, keep), keep
    return np.asarray(stack), None
