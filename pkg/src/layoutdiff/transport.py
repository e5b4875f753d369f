"""1-Wasserstein distances: exact 1-D, exact assignment, and sliced estimates."""

import numpy as np

from .kernels import lap_solve


def w1_1d(p, q) -> float:
    """W1 between two empirical distributions on the line.

    Equal sizes reduce to matching sorted samples. Otherwise the distance is
    the integral of |F_p^-1 - F_q^-1| over the merged quantile grid.
    """
    p = np.sort(np.asarray(p, dtype=np.float64).ravel())
    q = np.sort(np.asarray(q, dtype=np.float64).ravel())
    if p.size == 0 or q.size == 0:
        raise ValueError("empirical distributions must be non-empty")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("samples must be finite")
    if p.size == q.size:
        return float(np.mean(np.abs(p - q)))
    levels = np.union1d(np.arange(1, p.size + 1) / p.size, np.arange(1, q.size + 1) / q.size)
    widths = np.diff(np.concatenate([[0.0], levels]))
    # quantile index for the interval ending at each level
    ip = np.minimum(np.ceil(levels * p.size - 1e-9).astype(int) - 1, p.size - 1)
    iq = np.minimum(np.ceil(levels * q.size - 1e-9).astype(int) - 1, q.size - 1)
    return float(np.sum(widths * np.abs(p[ip] - q[iq])))


def pairwise_euclidean(a, b) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def w1_exact(a, b) -> float:
    """W1 between two equal-size point clouds via an optimal assignment."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("exact solve needs equal-size clouds of equal dimension")
    cost = pairwise_euclidean(a, b)
    assign = lap_solve(cost)
    return float(np.mean(cost[np.arange(a.shape[0]), assign]))


def w1_sliced(a, b, n_projections: int = 128, rng=None) -> float:
    """Mean 1-D W1 over random unit directions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rng = np.random.default_rng(0) if rng is None else rng
    dirs = rng.standard_normal((n_projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return float(np.mean([w1_1d(a @ d, b @ d) for d in dirs]))
