"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy twins in
``_fallback`` take over. Set ``LAYOUTDIFF_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("LAYOUTDIFF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def label8(mask):
    """Label 8-connected foreground regions. Returns ``(labels, count)``."""
    return _impl.label8(np.ascontiguousarray(mask, dtype=np.uint8))


def lap_solve(cost):
    """Minimum-cost perfect matching on a square cost matrix; returns row->col."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"square cost matrix required, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    return _impl.lap_solve(cost)


def im2col3x3(x):
    """(B,H,W,C) -> (B*H*W, 9*C) patch matrix for a 3x3 same-padded conv."""
    return _impl.im2col3x3(np.ascontiguousarray(x))


def col2im3x3(cols, shape):
    """Adjoint of :func:`im2col3x3`: scatter-add patches back to (B,H,W,C)."""
    B, H, W, C = shape
    return _impl.col2im3x3(np.ascontiguousarray(cols), B, H, W, C)
