"""A small convolutional UNet denoiser with hand-written backprop.

Tensors are channels-last: images are ``(B, H, W, C)``. Each layer caches what
its backward pass needs, so a layer instance serves one forward/backward pair
at a time.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import col2im3x3, im2col3x3

LEAK = 0.2


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, gain=1.0):
        super().__init__()
        std = gain * math.sqrt(2.0 / n_in)
        self.params["W"] = (rng.standard_normal((n_in, n_out)) * std).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.zero_grad()

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        self.grads["W"] += self._x.T @ g
        self.grads["b"] += g.sum(axis=0)
        return g @ self.params["W"].T


class Conv3x3(Layer):
    """Same-padded 3x3 convolution as a patch-matrix product."""

    def __init__(self, c_in, c_out, rng, dtype=np.float32, gain=1.0):
        super().__init__()
        std = gain * math.sqrt(2.0 / (9 * c_in))
        self.params["W"] = (rng.standard_normal((9 * c_in, c_out)) * std).astype(dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)
        self.zero_grad()

    def forward(self, x):
        B, H, W, _ = x.shape
        self._shape = x.shape
        self._cols = im2col3x3(x)
        out = self._cols @ self.params["W"] + self.params["b"]
        return out.reshape(B, H, W, -1)

    def backward(self, g):
        g2 = g.reshape(-1, g.shape[-1])
        self.grads["W"] += self._cols.T @ g2
        self.grads["b"] += g2.sum(axis=0)
        return col2im3x3(g2 @ self.params["W"].T, self._shape)


class LeakyReLU(Layer):
    def forward(self, x):
        self._neg = x < 0
        return np.where(self._neg, x * LEAK, x)

    def backward(self, g):
        return np.where(self._neg, g * LEAK, g)


COND_SCALE = 100.0  # normalized dims are stretched so that one pixel moves the features


def timestep_embedding(t, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal features of integer timesteps, ``(B,) -> (B, dim)``."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb.astype(dtype)


def condition_embedding(cond, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal features of normalized (w, h) pairs, ``(B, 2) -> (B, dim)``."""
    cond = np.asarray(cond, dtype=np.float64) * COND_SCALE
    half = dim // 2
    parts = [timestep_embedding(cond[:, 0], half, np.float64), timestep_embedding(cond[:, 1], dim - half, np.float64)]
    return np.concatenate(parts, axis=1).astype(dtype)


def coordinate_grid(H: int, W: int, dtype=np.float32) -> np.ndarray:
    """(H, W, 2) row/column positions scaled to [-1, 1]."""
    ys = np.linspace(-1.0, 1.0, H) if H > 1 else np.zeros(1)
    xs = np.linspace(-1.0, 1.0, W) if W > 1 else np.zeros(1)
    return np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).astype(dtype)


class AvgPool2(Layer):
    """2x2 average pooling with stride 2."""

    def forward(self, x):
        B, H, W, C = x.shape
        return x.reshape(B, H // 2, 2, W // 2, 2, C).mean(axis=(2, 4))

    def backward(self, g):
        up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
        return up * np.asarray(0.25, dtype=g.dtype)


class Upsample2(Layer):
    """Nearest-neighbour 2x upsampling."""

    def forward(self, x):
        return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)

    def backward(self, g):
        B, H, W, C = g.shape
        return g.reshape(B, H // 2, 2, W // 2, 2, C).sum(axis=(2, 4))


@dataclass
class ArchSpec:
    engine: str  # "ddpm" or "mdm"
    in_channels: int
    out_channels: int
    H: int
    W: int
    channels: int = 16
    channel_mults: tuple = (1, 2, 2)
    emb_dim: int = 32
    prediction: str = "eps"  # "eps" | "v" for ddpm, "logits" for mdm
    dtype: str = "float32"

    def __post_init__(self):
        self.channel_mults = tuple(int(m) for m in self.channel_mults)

    def validate(self):
        if self.engine not in ("ddpm", "mdm"):
            raise ValueError(f"unknown engine {self.engine!r}")
        for name in ("in_channels", "out_channels", "H", "W", "channels", "emb_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.channel_mults or min(self.channel_mults) < 1:
            raise ValueError("channel_mults must be positive")
        step = 2 ** (len(self.channel_mults) - 1)
        if self.H % step or self.W % step:
            raise ValueError(f"grid {self.H}x{self.W} not divisible by {step} for {len(self.channel_mults)} levels")
        allowed = ("logits",) if self.engine == "mdm" else ("eps", "v")
        if self.prediction not in allowed:
            raise ValueError(f"prediction {self.prediction!r} invalid for {self.engine}")

    def to_dict(self):
        d = asdict(self)
        d["channel_mults"] = list(self.channel_mults)
        return d


class ResBlock:
    def __init__(self, ch, emb_dim, rng, dtype):
        self.act1, self.act2 = LeakyReLU(), LeakyReLU()
        self.conv1 = Conv3x3(ch, ch, rng, dtype)
        self.proj = Dense(emb_dim, ch, rng, dtype)
        self.conv2 = Conv3x3(ch, ch, rng, dtype, gain=0.5)

    def layers(self):
        return {"conv1": self.conv1, "proj": self.proj, "conv2": self.conv2}

    def forward(self, h, e):
        a = self.conv1.forward(self.act1.forward(h))
        a = a + self.proj.forward(e)[:, None, None, :]
        a = self.conv2.forward(self.act2.forward(a))
        return h + a

    def backward(self, g):
        ga = self.act2.backward(self.conv2.backward(g))
        ge = self.proj.backward(ga.sum(axis=(1, 2)))
        gh = self.act1.backward(self.conv1.backward(ga))
        return g + gh, ge


class TinyDenoiser:
    """Small UNet with timestep and (width, height) conditioning.

    One residual block per resolution on the way down and on the way up,
    average pooling between levels, nearest upsampling with additive skips.
    Inputs get two coordinate channels appended so the net can place the
    bounding box a dimension condition asks for. The condition gets sinusoidal
    features, passes through a dense layer and is added to the timestep embedding; rows flagged as
    dropped use a learned null vector instead.
    """

    def __init__(self, arch: ArchSpec, rng):
        arch.validate()
        self.arch = arch
        self.engine = arch.engine
        self.prediction = arch.prediction
        dt = np.dtype(arch.dtype)
        E = arch.emb_dim
        chans = [arch.channels * m for m in arch.channel_mults]
        self.coords = coordinate_grid(arch.H, arch.W, dt)
        self.conv_in = Conv3x3(arch.in_channels + 2, chans[0], rng, dt)
        self.dense_t = Dense(E, E, rng, dt)
        self.dense_c = Dense(E, E, rng, dt)
        self.null = Layer()
        self.null.params["v"] = (rng.standard_normal(E) * 0.1).astype(dt)
        self.null.zero_grad()
        self.act_e = LeakyReLU()
        self.down, self.up = [], []
        for lvl, ch in enumerate(chans):
            pool = AvgPool2() if lvl else None
            conv = Conv3x3(chans[lvl - 1], ch, rng, dt) if lvl and chans[lvl - 1] != ch else None
            self.down.append((pool, conv, ResBlock(ch, E, rng, dt)))
        for lvl in range(len(chans) - 2, -1, -1):
            conv = Conv3x3(chans[lvl + 1], chans[lvl], rng, dt) if chans[lvl + 1] != chans[lvl] else None
            self.up.append((lvl, Upsample2(), conv, ResBlock(chans[lvl], E, rng, dt)))
        self.act_out = LeakyReLU()
        self.conv_out = Conv3x3(chans[0], arch.out_channels, rng, dt, gain=0.1)

    # -- parameter bookkeeping -------------------------------------------------
    def layers(self) -> dict[str, Layer]:
        out = {"conv_in": self.conv_in, "dense_t": self.dense_t, "dense_c": self.dense_c, "null": self.null}
        for lvl, (_, conv, blk) in enumerate(self.down):
            if conv is not None:
                out[f"down{lvl}.conv"] = conv
            for name, layer in blk.layers().items():
                out[f"down{lvl}.{name}"] = layer
        for lvl, _, conv, blk in self.up:
            if conv is not None:
                out[f"up{lvl}.conv"] = conv
            for name, layer in blk.layers().items():
                out[f"up{lvl}.{name}"] = layer
        out["conv_out"] = self.conv_out
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self.layers().items() for pn, p in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": layer.grads[pn] for ln, layer in self.layers().items() for pn in layer.params}

    def zero_grad(self):
        for layer in self.layers().values():
            layer.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def load_parameters(self, params: dict[str, np.ndarray]):
        own = self.parameters()
        if set(own) != set(params):
            raise ValueError("parameter names do not match the architecture")
        for name, value in params.items():
            if own[name].shape != value.shape:
                raise ValueError(f"{name}: shape {value.shape} != {own[name].shape}")
            own[name][...] = value

    # -- passes ----------------------------------------------------------------
    def __call__(self, x, t, cond=None, dropped=None):
        return self.forward(x, t, cond, dropped)

    def forward(self, x, t, cond=None, dropped=None):
        dt = self.coords.dtype
        x = np.asarray(x, dtype=dt)
        B, H, W, C = x.shape
        if (H, W, C) != (self.arch.H, self.arch.W, self.arch.in_channels):
            raise ValueError(f"input {x.shape} does not match architecture")
        t = np.broadcast_to(np.asarray(t), (B,))
        if cond is None:
            cond = np.zeros((B, 2), dtype=dt)
            dropped = np.ones(B, dtype=bool)
        cond = np.asarray(cond, dtype=dt).reshape(B, 2)
        dropped = np.zeros(B, dtype=bool) if dropped is None else np.broadcast_to(np.asarray(dropped, bool), (B,))
        self._dropped = dropped

        inp = np.concatenate([x, np.broadcast_to(self.coords, (B, H, W, 2))], axis=-1)
        h = self.conv_in.forward(inp)
        e = self.dense_t.forward(timestep_embedding(t, self.arch.emb_dim, dt))
        c = self.dense_c.forward(condition_embedding(cond, self.arch.emb_dim, dt))
        e = self.act_e.forward(e + np.where(dropped[:, None], self.null.params["v"][None], c))
        skips = []
        for pool, conv, blk in self.down:
            if pool is not None:
                h = pool.forward(h)
            if conv is not None:
                h = conv.forward(h)
            h = blk.forward(h, e)
            skips.append(h)
        for lvl, upsample, conv, blk in self.up:
            h = upsample.forward(h)
            if conv is not None:
                h = conv.forward(h)
            h = blk.forward(h + skips[lvl], e)
        return self.conv_out.forward(self.act_out.forward(h))

    def backward(self, g):
        """Accumulate parameter gradients for output gradient ``g``; returns input gradient."""
        g = np.asarray(g, dtype=self.coords.dtype)
        gh = self.act_out.backward(self.conv_out.backward(g))
        ge = np.zeros((g.shape[0], self.arch.emb_dim), dtype=g.dtype)
        gskip = [None] * len(self.down)
        for lvl, upsample, conv, blk in reversed(self.up):
            gh, ge_b = blk.backward(gh)
            ge += ge_b
            gskip[lvl] = gh
            if conv is not None:
                gh = conv.backward(gh)
            gh = upsample.backward(gh)
        for lvl in range(len(self.down) - 1, -1, -1):
            pool, conv, blk = self.down[lvl]
            if gskip[lvl] is not None:
                gh = gh + gskip[lvl]
            gh, ge_b = blk.backward(gh)
            ge += ge_b
            if conv is not None:
                gh = conv.backward(gh)
            if pool is not None:
                gh = pool.backward(gh)
        ge = self.act_e.backward(ge)
        self.dense_t.backward(ge)
        self.dense_c.backward(ge * (~self._dropped)[:, None])
        self.null.grads["v"] += ge[self._dropped].sum(axis=0)
        gin = self.conv_in.backward(gh)
        return gin[..., : self.arch.in_channels]


class SGD:
    """Momentum SGD with optional global-norm clipping."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float = 0.9, clip: float | None = None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> float:
        norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
        scale = 1.0
        if self.clip is not None and norm > self.clip:
            scale = self.clip / norm
        for k, p in self.params.items():
            v = self.velocity[k]
            v *= self.momentum
            v -= (self.lr * scale) * grads[k]
            p += v
        return norm


class Adam:
    """Adam with bias correction and optional global-norm clipping."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip: float | None = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> float:
        norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
        scale = 1.0
        if self.clip is not None and norm > self.clip:
            scale = self.clip / norm
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k] * scale
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * np.square(g)
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
        return norm
