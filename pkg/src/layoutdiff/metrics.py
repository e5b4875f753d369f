"""Geometry-aware evaluation: IoU-W1, CoM-W1, RCE, DimErr and a Fréchet proxy.

Sample sets are sequences of stacks ``(M, H, W)`` or fields ``(H, W)``; a
batched array works too.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .kernels import label8
from .layout import DEFAULT_THRESHOLD, DimSpec, assembled_mask, component_mask, measure_dims
from .rng import substream
from .transport import w1_1d, w1_exact, w1_sliced

EXACT_MAX_N = 512
SLICED_PROJECTIONS = 128


def _n_components(x) -> int | None:
    x = np.asarray(x)
    return None if x.ndim == 2 else x.shape[0]


def iou(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("masks must share a grid")
    union = np.count_nonzero(a | b)
    return 0.0 if union == 0 else np.count_nonzero(a & b) / union


def pair_ious(x, M: int, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """IoU of every unordered component pair, in ``combinations(range(M), 2)`` order."""
    masks = [component_mask(x, i, threshold) for i in range(M)]
    return np.array([iou(masks[i], masks[j]) for i, j in combinations(range(M), 2)])


def iou_metric(real_set, gen_set, M: int, threshold: float = DEFAULT_THRESHOLD):
    """Per-pair W1 between real and generated IoU distributions, and their mean."""
    if M < 2:
        raise ValueError("IoU needs at least two components")
    if len(real_set) == 0 or len(gen_set) == 0:
        raise ValueError("sample sets must be non-empty")
    real = np.stack([pair_ious(x, M, threshold) for x in real_set])
    gen = np.stack([pair_ious(x, M, threshold) for x in gen_set])
    pairs = [w1_1d(real[:, k], gen[:, k]) for k in range(real.shape[1])]
    return pairs, float(np.mean(pairs))


def com_vector(x, M: int | None = None):
    """Intensity-weighted (row, col) centroid per component, concatenated.

    Empty components sit at the grid centre. Returns ``(vector, n_empty)``.
    """
    x = np.asarray(x)
    if x.ndim == 2:
        if M is None:
            raise ValueError("M is required for categorical input")
        weights = np.stack([(x == i + 1).astype(np.float64) for i in range(M)])
    else:
        weights = x.astype(np.float64)
    _, H, W = weights.shape
    rows = np.arange(H, dtype=np.float64)[:, None]
    cols = np.arange(W, dtype=np.float64)[None, :]
    out, empty = [], 0
    for w in weights:
        mass = w.sum()
        if mass <= 0:
            empty += 1
            out.extend([(H - 1) / 2.0, (W - 1) / 2.0])
        else:
            out.extend([float((w * rows).sum() / mass), float((w * cols).sum() / mass)])
    return np.array(out), empty


def com_cloud(samples, M: int):
    vecs, empty = [], 0
    for x in samples:
        v, e = com_vector(x, M)
        vecs.append(v)
        empty += e
    return np.stack(vecs), empty


def cloud_w1(a, b, seed: int = 0):
    """W1 between point clouds; returns ``(value, estimator)``.

    Up to 512 points per side the clouds are cut to equal size (seeded
    subsample of the larger) and solved exactly; above that a seeded sliced
    estimate with 128 projections is used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = min(len(a), len(b))
    if n <= EXACT_MAX_N:
        if len(a) > n:
            a = a[np.sort(substream(seed, "com-subsample", 0).choice(len(a), n, replace=False))]
        if len(b) > n:
            b = b[np.sort(substream(seed, "com-subsample", 1).choice(len(b), n, replace=False))]
        return w1_exact(a, b), "exact_assignment"
    return w1_sliced(a, b, SLICED_PROJECTIONS, substream(seed, "com-sliced")), f"sliced_{SLICED_PROJECTIONS}"


def com_metric(real_set, gen_set, M: int, seed: int = 0):
    """Returns ``(w1, estimator, empty_component_count)``; empties counted on the generated side."""
    if len(real_set) == 0 or len(gen_set) == 0:
        raise ValueError("sample sets must be non-empty")
    real, _ = com_cloud(real_set, M)
    gen, empty = com_cloud(gen_set, M)
    value, estimator = cloud_w1(real, gen, seed)
    return value, estimator, empty


def count_regions(mask) -> int:
    """Number of 8-connected true regions."""
    return int(label8(np.asarray(mask, dtype=bool))[1])


def rce_from_counts(counts) -> float:
    """W1 from the region-count distribution to the point mass at one region."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("need at least one sample")
    return float(np.mean(np.abs(counts - 1.0)))


def rce(gen_set, threshold: float = DEFAULT_THRESHOLD) -> float:
    return rce_from_counts([count_regions(assembled_mask(x, threshold)) for x in gen_set])


def dim_err(target: DimSpec, generated, threshold: float = DEFAULT_THRESHOLD) -> float:
    """|w_t - w| + |h_t - h| of the assembled bounding box; an empty sample costs W + H."""
    mask = assembled_mask(generated, threshold)
    actual = measure_dims(mask)
    if actual is None:
        H, W = mask.shape
        return float(W + H)
    return float(abs(target.width - actual.width) + abs(target.height - actual.height))


def mean_dim_err(targets, gen_set, threshold: float = DEFAULT_THRESHOLD):
    """Mean DimErr and the number of empty samples that took the max penalty."""
    errs, empty = [], 0
    for d, x in zip(targets, gen_set, strict=True):
        if not assembled_mask(x, threshold).any():
            empty += 1
        errs.append(dim_err(d, x, threshold))
    return float(np.mean(errs)), empty


def layout_features(x, M: int, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Area fraction per component, normalized centroids, normalized bounding box (3M+2 values)."""
    x = np.asarray(x)
    H, W = x.shape[-2:]
    area = [component_mask(x, i, threshold).mean() for i in range(M)]
    com, _ = com_vector(x, M)
    com = com / np.tile([max(H - 1, 1), max(W - 1, 1)], M)
    dims = measure_dims(assembled_mask(x, threshold))
    box = [0.0, 0.0] if dims is None else [dims.width / W, dims.height / H]
    return np.concatenate([area, com, box])


def _sqrtm_psd(a):
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(feat_a, feat_b) -> float:
    """Fréchet distance between Gaussians fitted to two feature sets."""
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two samples per side")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("features must be finite")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    root_a = _sqrtm_psd(cov_a)
    middle = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh((middle + middle.T) / 2.0)
    tr_cross = float(np.sum(np.sqrt(np.clip(vals, 0.0, None))))
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_cross)
    return max(value, 0.0)


def frechet_proxy(real_set, gen_set, M: int, features=None) -> float:
    """Fréchet distance on hand-crafted layout features (not comparable to FID)."""
    features = features or (lambda x: layout_features(x, M))
    return frechet_distance(np.stack([features(x) for x in real_set]), np.stack([features(x) for x in gen_set]))


@dataclass
class MetricReport:
    scenario: str
    n_real: int
    n_gen: int
    seed: int
    com_w1: float
    com_estimator: str
    rce: float
    empty_component_count: int
    iou_w1_pairs: list | None = None
    iou_w1_mean: float | None = None
    dim_err_mean: float | None = None
    frechet_proxy: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "n_real": self.n_real,
            "n_gen": self.n_gen,
            "seed": self.seed,
            "com_w1": self.com_w1,
            "com_estimator": self.com_estimator,
            "rce": self.rce,
            "empty_component_count": self.empty_component_count,
        }
        for key in ("iou_w1_pairs", "iou_w1_mean", "dim_err_mean", "frechet_proxy"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out.update(self.extra)
        return out


def evaluate(scenario, real_set, gen_set, M: int, seed: int, *, with_iou: bool, with_frechet: bool,
             targets=None) -> MetricReport:
    com, estimator, empty = com_metric(real_set, gen_set, M, seed)
    report = MetricReport(
        scenario=scenario, n_real=len(real_set), n_gen=len(gen_set), seed=seed,
        com_w1=com, com_estimator=estimator, rce=rce(gen_set), empty_component_count=empty,
    )
    if with_iou:
        report.iou_w1_pairs, report.iou_w1_mean = iou_metric(real_set, gen_set, M)
    if with_frechet:
        report.frechet_proxy = frechet_proxy(real_set, gen_set, M)
    if targets is not None:
        report.dim_err_mean, n_empty = mean_dim_err(targets, gen_set)
        report.extra["dim_err_empty_samples"] = n_empty
    return report
