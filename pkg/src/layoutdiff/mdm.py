"""Multinomial diffusion over per-pixel class labels.

Distributions are arrays whose last axis runs over the K classes. Timesteps
index ``schedule.alpha_bar`` directly (``alpha_bar[0] == 1``).
"""

import functools

import numpy as np

from .layout import DimSpec, one_hot
from .parallel import run_chunked
from .rng import substream

PROB_FLOOR = 1e-12


class MaskKernelError(ValueError):
    """The inpainting mask gives zero weight to every class the kernel allows."""


def _expand(values, ndim: int) -> np.ndarray:
    """Reshape per-item scalars ``(B,)`` to broadcast against ``(B, ..., K)``."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def forward_step_kernel(theta, beta) -> np.ndarray:
    """One noising step: ``(1 - beta) * theta + beta / K``."""
    theta = np.asarray(theta, dtype=np.float64)
    beta = _expand(beta, theta.ndim)
    return (1.0 - beta) * theta + beta / theta.shape[-1]


def forward_marginal(c0, t, schedule) -> np.ndarray:
    """Closed-form ``q(c_t | c_0)``; ``t == 0`` returns ``c0``."""
    schedule.check_t(t)
    c0 = np.asarray(c0, dtype=np.float64)
    ab = _expand(schedule.alpha_bar[np.asarray(t)], c0.ndim)
    return ab * c0 + (1.0 - ab) / c0.shape[-1]


def posterior(c_t, c0_hat, t, schedule) -> np.ndarray:
    """``q(c_{t-1} | c_t, c0_hat)`` for one-hot ``c_t`` and a class distribution ``c0_hat``.

    ``c0_hat`` is floored at 1e-12 so every class keeps some prior mass.
    """
    schedule.check_t(t, lo=1)
    c_t = np.asarray(c_t, dtype=np.float64)
    c0_hat = np.maximum(np.asarray(c0_hat, dtype=np.float64), PROB_FLOOR)
    K = c_t.shape[-1]
    t = np.asarray(t)
    beta = _expand(schedule.betas[t - 1], c_t.ndim)
    ab_prev = _expand(schedule.alpha_bar[t - 1], c_t.ndim)
    likelihood = (1.0 - beta) * c_t + beta / K
    prior = ab_prev * c0_hat + (1.0 - ab_prev) / K
    mass = likelihood * prior
    total = mass.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise FloatingPointError("posterior has zero total mass")
    return mass / total


def masked_kernel(theta, r) -> np.ndarray:
    """Reweight a categorical by non-negative ``r`` and renormalize."""
    theta = np.asarray(theta, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("mask weights must be non-negative")
    mass = r * theta
    total = mass.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise MaskKernelError("mask assigns zero probability to every admissible class")
    return mass / total


def categorical_draw(probs, u) -> np.ndarray:
    """Inverse-CDF sample from ``probs`` (..., K) using uniforms ``u`` (...)."""
    cdf = np.cumsum(np.asarray(probs, dtype=np.float64), axis=-1)
    total = cdf[..., -1]
    target = np.minimum(np.asarray(u) * total, np.nextafter(total, -np.inf))
    return (cdf <= target[..., None]).sum(axis=-1)


def masked_reverse_step(theta, r, rng) -> np.ndarray:
    """Draw classes from the mask-reweighted kernel; one uniform per pixel."""
    probs = masked_kernel(theta, r)
    return categorical_draw(probs, rng.random(probs.shape[:-1]))


def inpainting_mask(observed, mask, K: int) -> np.ndarray:
    """Weights ``r``: one-hot of the observation on observed pixels, ones elsewhere."""
    observed = np.asarray(observed)
    mask = np.asarray(mask, dtype=bool)
    return np.where(mask[..., None], one_hot(observed, K), 1.0)


def softmax(logits, axis=-1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def guided_logits(denoiser, x, t, cond, guidance_w):
    """ĉ0 logits, interpolated between unconditional and conditional branches.

    With no condition (or w == 0) only the null-token branch runs; w == 1 runs
    only the conditional branch.
    """
    B = x.shape[0]
    tt = np.full(B, t)
    if cond is None or guidance_w == 0:
        return np.asarray(denoiser(x, tt, None, np.ones(B, bool)), dtype=np.float64)
    cond_logits = np.asarray(denoiser(x, tt, cond, np.zeros(B, bool)), dtype=np.float64)
    if guidance_w is None or guidance_w == 1:
        return cond_logits
    uncond = np.asarray(denoiser(x, tt, cond, np.ones(B, bool)), dtype=np.float64)
    return uncond + guidance_w * (cond_logits - uncond)


def normalize_conditions(condition, n: int, H: int, W: int):
    """DimSpecs or (w, h) pixel pairs -> (n, 2) array of (w/W, h/H), or None."""
    if condition is None:
        return None
    if isinstance(condition, DimSpec):
        condition = [condition] * n
    arr = np.asarray([c.as_tuple() if isinstance(c, DimSpec) else tuple(c) for c in condition], dtype=np.float64)
    if arr.shape != (n, 2):
        raise ValueError(f"expected {n} conditions, got shape {arr.shape}")
    return arr / np.array([W, H], dtype=np.float64)


def _per_sample(arr, n, shape):
    if arr is None:
        return None
    arr = np.asarray(arr)
    return np.broadcast_to(arr, (n,) + shape) if arr.shape == shape else arr


def _sample_chunk(start, stop, *, denoiser, schedule, K, H, W, cond, guidance_w, mask, observed, seed, callback):
    B = stop - start
    rngs = [substream(seed, "mdm-sample", i) for i in range(start, stop)]
    r = None
    if mask is not None:
        r = inpainting_mask(observed[start:stop], mask[start:stop], K)
    uniform = np.full((B, H, W, K), 1.0 / K)
    u = np.stack([g.random((H, W)) for g in rngs])
    labels = categorical_draw(uniform if r is None else masked_kernel(uniform, r), u)
    c = None if cond is None else cond[start:stop]
    if callback is not None:
        callback(schedule.T, start, labels)
    for t in range(schedule.T, 0, -1):
        x = one_hot(labels, K)
        c0_hat = softmax(guided_logits(denoiser, x, t, c, guidance_w))
        theta = posterior(x, c0_hat, t, schedule)
        u = np.stack([g.random((H, W)) for g in rngs])
        labels = categorical_draw(theta if r is None else masked_kernel(theta, r), u)
        if callback is not None:
            callback(t - 1, start, labels)
    return labels


def sample(
    denoiser,
    schedule,
    n: int,
    *,
    K: int,
    H: int,
    W: int,
    condition=None,
    guidance_w=None,
    mask=None,
    observed=None,
    seed: int = 0,
    chunk_size: int = 16,
    workers: int = 1,
    callback=None,
) -> np.ndarray:
    """Run the reverse chain for ``n`` fields; returns ``(n, H, W)`` labels.

    ``mask``/``observed`` (shared or per-sample) freeze observed pixels through
    the masked kernel. ``condition`` holds per-sample (or one shared) target
    dimensions; ``guidance_w`` scales classifier-free guidance. ``callback(t,
    start, labels)`` sees the state of each chunk after every step (serial runs
    only).
    """
    if mask is not None and observed is None:
        raise ValueError("an observed field is required with a mask")
    mask = _per_sample(None if mask is None else np.asarray(mask, bool), n, (H, W))
    observed = _per_sample(observed, n, (H, W))
    cond = normalize_conditions(condition, n, H, W)
    if callback is not None:
        workers = 1
    fn = functools.partial(
        _sample_chunk, denoiser=denoiser, schedule=schedule, K=K, H=H, W=W, cond=cond,
        guidance_w=guidance_w, mask=mask, observed=observed, seed=seed, callback=callback,
    )
    return run_chunked(fn, n, chunk_size, workers).astype(np.int64)
