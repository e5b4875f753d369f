"""Denoisers, the training losses of both engines, and an exact oracle.

A denoiser is any callable ``f(x, t, cond, dropped)`` on channels-last input
``x`` of shape ``(B, H, W, C)`` with per-item timesteps ``t``, optional
``(B, 2)`` normalized dimension conditions and a ``(B,)`` boolean null-token
flag. It exposes ``engine`` ("ddpm"/"mdm") and ``prediction`` ("eps", "v" or
"logits"). Trainable denoisers also have ``zero_grad``/``backward``/``gradients``.
"""

from dataclasses import dataclass

import numpy as np

from . import ddpm, mdm
from .layout import one_hot

ORACLE_MARGIN = 30.0


class OracleDenoiser:
    """Returns the exact denoising target implied by known ground truth.

    ``truth`` is one clean sample or a batch of them: ``(H, W, M)`` stacks
    (channels-last) for the Gaussian engine, ``(H, W)`` labels for the
    categorical one. A batch must line up with the items passed at call time.
    """

    def __init__(self, truth, schedule, engine: str, prediction: str | None = None, K: int | None = None,
                 margin: float = ORACLE_MARGIN):
        self.engine = engine
        self.schedule = schedule
        self.truth = np.asarray(truth)
        if engine == "ddpm":
            self.prediction = prediction or "eps"
        elif engine == "mdm":
            if K is None:
                raise ValueError("the categorical oracle needs K")
            self.prediction = "logits"
            self.K = K
            self.margin = margin
        else:
            raise ValueError(f"unknown engine {engine!r}")

    def _truth_for(self, B, item_ndim):
        if self.truth.ndim == item_ndim:
            return np.broadcast_to(self.truth, (B,) + self.truth.shape)
        return self.truth[:B]

    def __call__(self, x, t, cond=None, dropped=None):
        x = np.asarray(x, dtype=np.float64)
        B = x.shape[0]
        t = np.broadcast_to(np.asarray(t), (B,))
        self.schedule.check_t(t, lo=1)
        if self.engine == "mdm":
            labels = self._truth_for(B, 2)
            return self.margin * one_hot(labels, self.K)
        x0 = self._truth_for(B, 3).astype(np.float64)
        ab = self.schedule.alpha_bar[t].reshape(B, 1, 1, 1)
        eps = (x - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
        if self.prediction == "v":
            return ddpm.v_target(x0, eps, t, self.schedule)
        return eps


@dataclass
class LossResult:
    loss: float
    grad_output: np.ndarray  # dLoss/d(denoiser output)
    t: np.ndarray
    grads: dict | None = None


def _maybe_backprop(denoiser, grad_output):
    if not hasattr(denoiser, "backward"):
        return None
    denoiser.zero_grad()
    denoiser.backward(grad_output)
    return denoiser.gradients()


def ddpm_loss(batch, denoiser, schedule, rng, cond=None, dropped=None, backprop=True) -> LossResult:
    """Mean squared error on the noise (or v) target at uniformly drawn timesteps.

    ``batch`` is ``(B, M, H, W)`` stacks. Draw order: timesteps, then noise.
    """
    x0 = np.asarray(batch, dtype=np.float64).transpose(0, 2, 3, 1)
    B = x0.shape[0]
    t = rng.integers(1, schedule.T + 1, size=B)
    eps = rng.standard_normal(x0.shape)
    x_t = ddpm.noise_to(x0, t, schedule, eps)
    pred = np.asarray(denoiser(x_t, t, cond, dropped), dtype=np.float64)
    target = ddpm.v_target(x0, eps, t, schedule) if getattr(denoiser, "prediction", "eps") == "v" else eps
    diff = pred - target
    loss = float(np.mean(diff**2))
    grad_output = 2.0 * diff / diff.size
    grads = _maybe_backprop(denoiser, grad_output) if backprop else None
    return LossResult(loss, grad_output, t, grads)


def mdm_kl(labels_t, labels_0, logits, t, schedule, K: int):
    """Per-pixel KL(q(c_{t-1}|c_t,c_0) || p(c_{t-1}|c_t)) and its gradient w.r.t. logits.

    At ``t == 1`` the true posterior is the one-hot ``c_0`` and the KL reduces
    to the negative log-likelihood of ``c_0`` under the model posterior.
    """
    c_t = one_hot(labels_t, K)
    c_0 = one_hot(labels_0, K)
    logits = np.asarray(logits, dtype=np.float64)
    p = mdm.softmax(logits)
    t = np.asarray(t)
    nd = c_t.ndim
    beta = mdm._expand(schedule.betas[t - 1], nd)
    ab_prev = mdm._expand(schedule.alpha_bar[t - 1], nd)
    lik = (1.0 - beta) * c_t + beta / K
    floor = (1.0 - ab_prev) / K
    q = lik * (ab_prev * c_0 + floor)
    q = q / q.sum(axis=-1, keepdims=True)
    prior = ab_prev * p + floor
    u = lik * prior
    total = u.sum(axis=-1, keepdims=True)
    log_theta = np.log(np.maximum(u, 1e-300)) - np.log(total)
    log_q = np.log(np.where(q > 0, q, 1.0))
    kl = np.maximum(np.sum(q * (log_q - log_theta), axis=-1), 0.0)  # rounding can dip below 0
    # dKL/dp_k = -q_k ab'/(ab' p_k + floor) + lik_k ab'/total, then through softmax
    share = np.divide(ab_prev * p, prior, out=np.zeros_like(p), where=prior > 0)
    pg = -q * share + p * lik * ab_prev / total
    grad = pg - p * pg.sum(axis=-1, keepdims=True)
    return kl, grad


def mdm_loss(batch, denoiser, schedule, rng, K: int, cond=None, dropped=None, ce_weight: float = 0.0,
             backprop=True) -> LossResult:
    """Mean per-pixel posterior KL at uniformly drawn timesteps.

    ``batch`` is ``(B, H, W)`` labels. ``ce_weight`` optionally adds the
    cross-entropy of the ĉ0 prediction. Draw order: timesteps, then uniforms.
    """
    labels_0 = np.asarray(batch)
    B = labels_0.shape[0]
    t = rng.integers(1, schedule.T + 1, size=B)
    probs = mdm.forward_marginal(one_hot(labels_0, K), t, schedule)
    labels_t = mdm.categorical_draw(probs, rng.random(labels_0.shape))
    logits = np.asarray(denoiser(one_hot(labels_t, K), t, cond, dropped), dtype=np.float64)
    kl, grad = mdm_kl(labels_t, labels_0, logits, t, schedule, K)
    loss = float(np.mean(kl))
    grad = grad / kl.size
    if ce_weight:
        p = mdm.softmax(logits)
        c_0 = one_hot(labels_0, K)
        ce = -np.sum(c_0 * np.log(np.maximum(p, 1e-300)), axis=-1)
        loss += ce_weight * float(np.mean(ce))
        grad = grad + ce_weight * (p - c_0) / kl.size
    grads = _maybe_backprop(denoiser, grad) if backprop else None
    return LossResult(loss, grad, t, grads)
