"""Gaussian diffusion on component stacks.

The sampler and denoisers work channels-last, ``(B, H, W, M)``; the public
:func:`sample` converts to and from ``(n, M, H, W)`` stacks.
"""

import functools
from dataclasses import dataclass

import numpy as np

from .mdm import normalize_conditions
from .parallel import run_chunked
from .rng import substream


@dataclass
class GaussianState:
    x: np.ndarray
    t: int


def _expand(values, ndim):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def noise_to(x0, t, schedule, eps) -> np.ndarray:
    """``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``, with per-item ``t`` allowed."""
    schedule.check_t(t)
    x0 = np.asarray(x0, dtype=np.float64)
    ab = _expand(schedule.alpha_bar[np.asarray(t)], x0.ndim)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def forward_sample(x0, t, schedule, rng) -> GaussianState:
    """Closed-form marginal draw ``x_t ~ q(x_t | x_0)``; ``t == 0`` returns ``x0``."""
    x0 = np.asarray(x0, dtype=np.float64)
    if np.all(np.asarray(t) == 0):
        return GaussianState(x0.copy(), 0)
    eps = rng.standard_normal(x0.shape)
    return GaussianState(noise_to(x0, t, schedule, eps), t)


def predict_x0(x_t, t, eps_hat, schedule) -> np.ndarray:
    ab = _expand(schedule.alpha_bar[np.asarray(t)], np.ndim(x_t))
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def v_target(x0, eps, t, schedule) -> np.ndarray:
    ab = _expand(schedule.alpha_bar[np.asarray(t)], np.ndim(x0))
    return np.sqrt(ab) * eps - np.sqrt(1.0 - ab) * x0


def eps_from_v(x_t, v, t, schedule) -> np.ndarray:
    ab = _expand(schedule.alpha_bar[np.asarray(t)], np.ndim(x_t))
    return np.sqrt(ab) * v + np.sqrt(1.0 - ab) * x_t


def reverse_moments(x_t, t: int, eps_hat, schedule):
    """Mean and std of the reverse Gaussian; the std is 0 at ``t == 1``."""
    schedule.check_t(t, lo=1)
    beta = schedule.betas[t - 1]
    ab, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    x0_hat = predict_x0(x_t, t, eps_hat, schedule)
    mean = (np.sqrt(ab_prev) * beta / (1.0 - ab)) * x0_hat + (np.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)) * x_t
    var = (1.0 - ab_prev) / (1.0 - ab) * beta
    return mean, (0.0 if t == 1 else float(np.sqrt(var)))


def reverse_step(state: GaussianState, eps_hat, schedule, rng=None, noise=None) -> GaussianState:
    """Draw ``x_{t-1}``; pass ``noise`` to supply the standard-normal draw yourself."""
    mean, std = reverse_moments(state.x, state.t, eps_hat, schedule)
    if std == 0.0:
        return GaussianState(mean, state.t - 1)
    if noise is None:
        noise = rng.standard_normal(mean.shape)
    return GaussianState(mean + std * noise, state.t - 1)


def inpaint_step(state, eps_hat, observed, channel_mask, schedule, rng=None, noise=None, obs_noise=None):
    """Reverse step, then overwrite observed channels with a forward-noised observation."""
    nxt = reverse_step(state, eps_hat, schedule, rng, noise)
    channel_mask = np.asarray(channel_mask, dtype=bool)
    if not channel_mask.any():
        return nxt
    observed = np.asarray(observed, dtype=np.float64)
    if nxt.t == 0:
        replacement = observed
    else:
        if obs_noise is None:
            obs_noise = rng.standard_normal(observed.shape)
        replacement = noise_to(observed, nxt.t, schedule, obs_noise)
    x = nxt.x.copy()
    x[..., channel_mask] = replacement[..., channel_mask]
    return GaussianState(x, nxt.t)


def guided_eps(eps_uncond, eps_cond, w) -> np.ndarray:
    return eps_uncond + w * (eps_cond - eps_uncond)


def _eps(denoiser, x, t, cond, dropped, schedule):
    out = np.asarray(denoiser(x, np.full(x.shape[0], t), cond, dropped), dtype=np.float64)
    if getattr(denoiser, "prediction", "eps") == "v":
        return eps_from_v(x, out, t, schedule)
    return out


def model_eps(denoiser, x, t, cond, guidance_w, schedule):
    B = x.shape[0]
    if cond is None or guidance_w == 0:
        return _eps(denoiser, x, t, None, np.ones(B, bool), schedule)
    e_c = _eps(denoiser, x, t, cond, np.zeros(B, bool), schedule)
    if guidance_w is None or guidance_w == 1:
        return e_c
    e_u = _eps(denoiser, x, t, cond, np.ones(B, bool), schedule)
    return guided_eps(e_u, e_c, guidance_w)


def _sample_chunk(start, stop, *, denoiser, schedule, M, H, W, cond, guidance_w, observed, channel_mask, seed, callback):
    rngs = [substream(seed, "ddpm-sample", i) for i in range(start, stop)]
    x = np.stack([g.standard_normal((H, W, M)) for g in rngs])
    c = None if cond is None else cond[start:stop]
    obs = None if observed is None else observed[start:stop]
    state = GaussianState(x, schedule.T)
    for t in range(schedule.T, 0, -1):
        eps_hat = model_eps(denoiser, state.x, t, c, guidance_w, schedule)
        noise = np.stack([g.standard_normal((H, W, M)) for g in rngs]) if t > 1 else None
        if obs is None:
            state = reverse_step(state, eps_hat, schedule, noise=noise)
        else:
            obs_noise = np.stack([g.standard_normal((H, W, M)) for g in rngs]) if t > 1 else None
            state = inpaint_step(state, eps_hat, obs, channel_mask, schedule, noise=noise, obs_noise=obs_noise)
        if callback is not None:
            callback(state.t, start, state.x)
    return np.clip(state.x, 0.0, 1.0).transpose(0, 3, 1, 2)


def sample(
    denoiser,
    schedule,
    n: int,
    *,
    M: int,
    H: int,
    W: int,
    condition=None,
    guidance_w=None,
    observed=None,
    channel_mask=None,
    seed: int = 0,
    chunk_size: int = 16,
    workers: int = 1,
    callback=None,
) -> np.ndarray:
    """Reverse chain from standard normal noise; returns ``(n, M, H, W)`` stacks in [0, 1].

    ``observed`` is one ``(M, H, W)`` stack or one per sample; ``channel_mask``
    (length M) picks which of its channels stay fixed.
    """
    if (observed is None) != (channel_mask is None):
        raise ValueError("observed and channel_mask go together")
    obs = None
    if observed is not None:
        observed = np.asarray(observed, dtype=np.float64)
        if observed.ndim == 3:
            observed = np.broadcast_to(observed, (n,) + observed.shape)
        obs = np.ascontiguousarray(observed.transpose(0, 2, 3, 1))
        channel_mask = np.asarray(channel_mask, dtype=bool)
        if not channel_mask.any():
            obs, channel_mask = None, None
    cond = normalize_conditions(condition, n, H, W)
    if callback is not None:
        workers = 1
    fn = functools.partial(
        _sample_chunk, denoiser=denoiser, schedule=schedule, M=M, H=H, W=W, cond=cond,
        guidance_w=guidance_w, observed=obs, channel_mask=channel_mask, seed=seed, callback=callback,
    )
    return run_chunked(fn, n, chunk_size, workers)
