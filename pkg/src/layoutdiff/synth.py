"""Procedural tire-like cross-sections standing in for a proprietary dataset.

Each sample is an arch whose bounding box is exactly the drawn (width, height):
an outer band split into tread (crown) and sidewalls (flanks), a carcass band,
an inner liner band, and two bead wedges (filler below, cushion above) resting
inside the arch feet. Components touch but never overlap. With fewer than six
components the trailing ones are left out (their pixels become background).
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernels import label8
from .layout import DimSpec, assembled_mask, categorical_to_stack, measure_dims
from .pgm import read_field, write_field
from .rng import substream

MANIFEST_FORMAT = "layoutdiff-dataset"
MANIFEST_VERSION = 1
BOTTOM_MARGIN = 1


def default_dim_ranges(H: int, W: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """((w_min, w_max), (h_min, h_max)); (24..60, 20..56) on a 64x64 grid."""
    return (round(0.375 * W), W - 4), (round(0.3125 * H), H - 8)


@dataclass
class SynthConfig:
    seed: int = 0
    n_samples: int = 1130
    M: int = 6
    H: int = 64
    W: int = 64
    dim_ranges: tuple | None = None
    train_fraction: float = 0.8

    def resolved_ranges(self):
        if self.dim_ranges is None:
            return default_dim_ranges(self.H, self.W)
        (w0, w1), (h0, h1) = self.dim_ranges
        return (int(w0), int(w1)), (int(h0), int(h1))

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.M < 1 or self.H < 1 or self.W < 1:
            raise ValueError("M, H, W must be positive")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")
        (w0, w1), (h0, h1) = self.resolved_ranges()
        if not (4 <= w0 <= w1 <= self.W):
            raise ValueError(f"width range {(w0, w1)} infeasible for W={self.W}")
        if not (3 <= h0 <= h1 <= self.H - BOTTOM_MARGIN):
            raise ValueError(f"height range {(h0, h1)} infeasible for H={self.H}")


@dataclass
class Dataset:
    fields: list
    dims: list
    train_idx: np.ndarray
    test_idx: np.ndarray
    config: SynthConfig = field(default_factory=SynthConfig)

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def K(self) -> int:
        return self.config.M + 1

    def subset(self, idx):
        return [self.fields[i] for i in idx], [self.dims[i] for i in idx]

    def stacks(self, idx=None) -> np.ndarray:
        idx = range(len(self)) if idx is None else idx
        return np.stack([categorical_to_stack(self.fields[i], self.config.M) for i in idx])


def _draw_dims(rng, ranges) -> tuple[int, int]:
    # heights follow widths loosely so the dimension cloud is a slanted band
    (w0, w1), (h0, h1) = ranges
    w = int(rng.integers(w0, w1 + 1))
    frac = 0.5 if w1 == w0 else (w - w0) / (w1 - w0)
    centre = h0 + frac * (h1 - h0)
    spread = 0.5 * (h1 - h0)
    lo = max(h0, math.floor(centre - spread))
    hi = min(h1, math.ceil(centre + spread))
    return w, int(rng.integers(lo, hi + 1))


def render_layout(w: int, h: int, M: int, H: int, W: int, rng) -> np.ndarray:
    """Rasterize one arch layout with bounding box (w, h) into an (H, W) field."""
    left = (W - w) // 2
    bottom = H - 1 - BOTTOM_MARGIN
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]
    inside_box = (cols >= left) & (cols < left + w) & (rows <= bottom) & (rows > bottom - h)
    u = (cols - left + 0.5) / w * 2.0 - 1.0
    v = (bottom - rows + 0.5) / h
    rho = np.sqrt(u**2 + v**2)
    phi = np.arctan2(np.abs(u), v)

    # band thicknesses in pixels, converted to normalized radius on the short semi-axis
    scale = min(w / 2.0, float(h))
    px = rng.uniform([1.6, 1.6, 1.2], [3.2, 3.0, 2.0])
    t_outer, t_carcass, t_liner = np.minimum(px / scale, 0.3)
    r1 = 1.0 - t_outer
    r2 = r1 - t_carcass
    r3 = r2 - t_liner
    crown = rng.uniform(0.45, 0.85)
    bead_h = rng.uniform(0.22, 0.38)
    bead_w = rng.uniform(0.12, 0.25)

    field = np.zeros((H, W), dtype=np.int64)
    outer = inside_box & (rho <= 1.0) & (rho > r1)
    parts = [
        outer & (phi < crown),
        inside_box & (rho <= r1) & (rho > r2),
        outer & (phi >= crown),
        inside_box & (rho <= r2) & (rho > r3),
    ]
    edge = np.sqrt(np.clip(r3**2 - v**2, 0.0, None))
    wedge = inside_box & (rho <= r3) & (v < bead_h) & (np.abs(u) >= edge - bead_w * (1.0 - v / bead_h))
    parts.append(wedge & (v < 0.35 * bead_h))
    parts.append(wedge & (v >= 0.35 * bead_h))
    for label, region in enumerate(parts[:M], start=1):
        field[region] = label
    return field


def generate_sample(cfg: SynthConfig, index: int, max_tries: int = 64):
    """Sample ``index`` of the dataset.

    Redraws until the layout forms one 8-connected region and every component
    owns at least one pixel.
    """
    ranges = cfg.resolved_ranges()
    rng = substream(cfg.seed, "synth", index)
    for _ in range(max_tries):
        w, h = _draw_dims(rng, ranges)
        field = render_layout(w, h, cfg.M, cfg.H, cfg.W, rng)
        mask = assembled_mask(field)
        if label8(mask)[1] == 1 and np.unique(field).size == cfg.M + 1:
            return field, measure_dims(mask)
    raise RuntimeError(f"sample {index}: no connected layout after {max_tries} draws")


def split_indices(n: int, seed: int, train_fraction: float = 0.8):
    perm = substream(seed, "split").permutation(n)
    n_train = int(round(n * train_fraction))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def generate_dataset(cfg: SynthConfig) -> Dataset:
    cfg.validate()
    fields, dims = [], []
    for i in range(cfg.n_samples):
        f, d = generate_sample(cfg, i)
        fields.append(f)
        dims.append(d)
    train_idx, test_idx = split_indices(cfg.n_samples, cfg.seed, cfg.train_fraction)
    return Dataset(fields, dims, train_idx, test_idx, cfg)


def _sample_id(i: int) -> str:
    return f"{i:06d}"


def save_dataset(ds: Dataset, directory) -> Path:
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    split = np.empty(len(ds), dtype=object)
    split[ds.train_idx] = "train"
    split[ds.test_idx] = "test"
    samples = []
    for i, (f, d) in enumerate(zip(ds.fields, ds.dims)):
        sid = _sample_id(i)
        (directory / "samples" / sid).mkdir(exist_ok=True)
        write_field(directory / "samples" / sid / "labels.pgm", f)
        samples.append({"id": sid, "width": d.width, "height": d.height, "split": str(split[i])})
    cfg = asdict(ds.config)
    cfg["dim_ranges"] = [list(r) for r in ds.config.resolved_ranges()]
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "seed": ds.config.seed,
        "config": cfg,
        "samples": samples,
        "train": [_sample_id(i) for i in ds.train_idx],
        "test": [_sample_id(i) for i in ds.test_idx],
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{directory}: not a dataset manifest")
    cfg_d = dict(manifest["config"])
    cfg_d["dim_ranges"] = tuple(tuple(r) for r in cfg_d["dim_ranges"])
    cfg = SynthConfig(**cfg_d)
    position = {s["id"]: i for i, s in enumerate(manifest["samples"])}
    fields = [read_field(directory / "samples" / s["id"] / "labels.pgm") for s in manifest["samples"]]
    dims = [DimSpec(s["width"], s["height"]) for s in manifest["samples"]]
    train_idx = np.array(sorted(position[s] for s in manifest["train"]), dtype=np.int64)
    test_idx = np.array(sorted(position[s] for s in manifest["test"]), dtype=np.int64)
    return Dataset(fields, dims, train_idx, test_idx, cfg)
