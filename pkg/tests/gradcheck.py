"""Central finite-difference probes shared by the unit and acceptance suites."""

import numpy as np

from layoutdiff.denoise import mdm_kl
from layoutdiff.nn import AvgPool2, ArchSpec, Conv3x3, Dense, LeakyReLU, ResBlock, TinyDenoiser, Upsample2
from layoutdiff.schedules import cosine_schedule

H = 1e-6


def rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


def probe(loss_fn, arr, analytic, rng, n_probes):
    """Worst relative error of ``analytic`` vs central differences at random entries of ``arr``."""
    worst = 0.0
    flat = arr.reshape(-1)
    gflat = analytic.reshape(-1)
    for i in rng.choice(flat.size, size=min(n_probes, flat.size), replace=False):
        old = flat[i]
        flat[i] = old + H
        up = loss_fn()
        flat[i] = old - H
        down = loss_fn()
        flat[i] = old
        worst = max(worst, rel_err(gflat[i], (up - down) / (2 * H)))
    return worst


def _layer_case(layer, x, rng, n_probes, fwd=None, bwd=None):
    fwd = fwd or layer.forward
    bwd = bwd or layer.backward
    out = fwd(x)
    R = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(fwd(x) * R))

    if hasattr(layer, "zero_grad"):
        layer.zero_grad()
    fwd(x)
    gx = bwd(R)
    errs = {"input": probe(loss, x, gx, rng, n_probes)}
    for name, p in getattr(layer, "params", {}).items():
        errs[name] = probe(loss, p, layer.grads[name].copy(), rng, n_probes)
    return max(errs.values())


def layer_gradient_errors(seed=0, n_probes=6) -> dict:
    """Worst relative error per layer type, float64 throughout."""
    rng = np.random.default_rng(seed)
    f64 = np.float64
    out = {}
    out["Dense"] = _layer_case(Dense(5, 4, rng, f64), rng.standard_normal((3, 5)), rng, n_probes)
    out["Conv3x3"] = _layer_case(Conv3x3(3, 4, rng, f64), rng.standard_normal((2, 5, 4, 3)), rng, n_probes)
    # keep inputs away from the kink
    x = rng.standard_normal((2, 4, 4, 3))
    x = np.where(np.abs(x) < 1e-3, 0.5, x)
    out["LeakyReLU"] = _layer_case(LeakyReLU(), x, rng, n_probes)
    out["AvgPool2"] = _layer_case(AvgPool2(), rng.standard_normal((2, 4, 6, 3)), rng, n_probes)
    out["Upsample2"] = _layer_case(Upsample2(), rng.standard_normal((2, 3, 2, 3)), rng, n_probes)

    blk = ResBlock(4, 6, rng, f64)
    e = rng.standard_normal((2, 6))
    h = rng.standard_normal((2, 4, 4, 4))
    R = rng.standard_normal(h.shape)

    def blk_loss():
        return float(np.sum(blk.forward(h, e) * R))

    for layer in blk.layers().values():
        layer.zero_grad()
    blk.forward(h, e)
    gh, ge = blk.backward(R)
    errs = [probe(blk_loss, h, gh, rng, n_probes), probe(blk_loss, e, ge, rng, n_probes)]
    for layer in blk.layers().values():
        for name, p in layer.params.items():
            errs.append(probe(blk_loss, p, layer.grads[name].copy(), rng, n_probes))
    out["ResBlock"] = max(errs)

    for engine, C in (("ddpm", 3), ("mdm", 4)):
        arch = ArchSpec(engine, C, C, 8, 8, channels=4, channel_mults=(1, 2), emb_dim=8,
                        prediction="eps" if engine == "ddpm" else "logits", dtype="float64")
        net = TinyDenoiser(arch, rng)
        x = rng.standard_normal((2, 8, 8, C))
        t = np.array([3, 7])
        cond = rng.random((2, 2))
        dropped = np.array([False, True])
        R = rng.standard_normal((2, 8, 8, C))

        def net_loss():
            return float(np.sum(net.forward(x, t, cond, dropped) * R))

        net.zero_grad()
        net.forward(x, t, cond, dropped)
        gx = net.backward(R)
        errs = [probe(net_loss, x, gx, rng, n_probes)]
        grads = {k: v.copy() for k, v in net.gradients().items()}
        for name, p in net.parameters().items():
            errs.append(probe(net_loss, p, grads[name], rng, 2))
        out[f"TinyDenoiser[{engine}]"] = max(errs)

    s = cosine_schedule(10)
    K = 4
    lt = rng.integers(0, K, (2, 3, 3))
    l0 = rng.integers(0, K, (2, 3, 3))
    logits = rng.standard_normal((2, 3, 3, K))
    tt = np.array([1, 6])

    def kl_loss():
        return float(np.sum(mdm_kl(lt, l0, logits, tt, s, K)[0]))

    out["mdm_kl"] = probe(kl_loss, logits, mdm_kl(lt, l0, logits, tt, s, K)[1], rng, 3 * n_probes)
    return out
