import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.ndimage import label as nd_label
from scipy.optimize import linear_sum_assignment

from layoutdiff import _fallback, kernels

try:
    from layoutdiff import _kernels
except ImportError:
    _kernels = None

BACKENDS = [_fallback] + ([_kernels] if _kernels is not None else [])
EIGHT = np.ones((3, 3), dtype=int)


def direct_conv3x3(x, w):
    """Zero-padded 3x3 cross-correlation, NHWC in, w of shape (3, 3, C, F)."""
    B, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((B, H, W, w.shape[-1]))
    for ky in range(3):
        for kx in range(3):
            out += np.einsum("bhwc,cf->bhwf", xp[:, ky:ky + H, kx:kx + W], w[ky, kx])
    return out


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if _kernels is not None:
        assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    code = "import layoutdiff.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, LAYOUTDIFF_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("mod", BACKENDS)
def test_label8_matches_scipy(mod, rng):
    for _ in range(200):
        mask = rng.random((16, 16)) < rng.uniform(0.1, 0.7)
        labels, n = mod.label8(mask.astype(np.uint8))
        ref, n_ref = nd_label(mask, structure=EIGHT)
        assert n == n_ref
        # same partition: labels map one-to-one
        pairs = set(zip(labels[mask].tolist(), ref[mask].tolist()))
        assert len(pairs) == n
        assert np.all(labels[~mask] == 0)


def test_label8_raster_order():
    mask = np.array([[0, 1, 0, 1], [0, 0, 0, 0], [1, 0, 0, 0]], dtype=np.uint8)
    labels, n = kernels.label8(mask)
    assert n == 3
    assert labels[0, 1] == 1 and labels[0, 3] == 2 and labels[2, 0] == 3


def test_label8_diagonal_is_connected():
    mask = np.eye(5, dtype=bool)
    assert kernels.label8(mask)[1] == 1


@pytest.mark.parametrize("mod", BACKENDS)
def test_lap_matches_scipy(mod, rng):
    for n in (1, 2, 5, 17, 40):
        cost = rng.random((n, n))
        assign = mod.lap_solve(np.ascontiguousarray(cost))
        r, c = linear_sum_assignment(cost)
        assert sorted(assign.tolist()) == list(range(n))
        assert cost[np.arange(n), assign].sum() == pytest.approx(cost[r, c].sum(), abs=1e-12)


def test_lap_validates_input():
    with pytest.raises(ValueError):
        kernels.lap_solve(np.ones((2, 3)))
    with pytest.raises(ValueError):
        kernels.lap_solve(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_im2col_matches_direct_conv(dtype, rng):
    x = rng.standard_normal((2, 5, 6, 3)).astype(dtype)
    w = rng.standard_normal((3, 3, 3, 4)).astype(dtype)
    cols = kernels.im2col3x3(x)
    assert cols.shape == (2 * 5 * 6, 27)
    y = (cols @ w.reshape(27, 4)).reshape(2, 5, 6, 4)
    np.testing.assert_allclose(y, direct_conv3x3(x.astype(np.float64), w.astype(np.float64)), rtol=1e-4, atol=1e-4)


def test_col2im_is_adjoint_of_im2col(rng):
    x = rng.standard_normal((2, 4, 5, 3))
    g = rng.standard_normal((2 * 4 * 5, 27))
    lhs = np.sum(kernels.im2col3x3(x) * g)
    rhs = np.sum(x * kernels.col2im3x3(g, x.shape))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.skipif(_kernels is None, reason="extension not built")
@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 2), st.integers(1, 6), st.integers(1, 6), st.integers(1, 3)),
              elements=st.floats(-10, 10)))
def test_backends_bit_identical_convolution_helpers(x):
    a = _kernels.im2col3x3(x)
    b = _fallback.im2col3x3(x)
    assert np.array_equal(a, b)
    B, H, W, C = x.shape
    assert np.array_equal(_kernels.col2im3x3(a, B, H, W, C), _fallback.col2im3x3(b, B, H, W, C))


@pytest.mark.skipif(_kernels is None, reason="extension not built")
@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1)))
def test_backends_identical_labels(mask):
    la, na = _kernels.label8(mask)
    lb, nb = _fallback.label8(mask)
    assert na == nb and np.array_equal(la, lb)


@pytest.mark.skipif(_kernels is None, reason="extension not built")
def test_backends_identical_assignment(rng):
    for n in (3, 10, 60):
        cost = rng.integers(0, 5, size=(n, n)).astype(np.float64)  # many ties
        assert np.array_equal(_kernels.lap_solve(cost), _fallback.lap_solve(cost))


E2E = """
import hashlib, numpy as np
from layoutdiff.kernels import BACKEND
from layoutdiff.nn import ArchSpec, TinyDenoiser
from layoutdiff.metrics import com_metric, rce
rng = np.random.default_rng(0)
net = TinyDenoiser(ArchSpec("mdm", 4, 4, 8, 8, channels=4, channel_mults=(1, 2), emb_dim=8, prediction="logits"), rng)
x = rng.standard_normal((2, 8, 8, 4)).astype(np.float32)
out = net(x, [1, 2])
net.zero_grad(); gin = net.backward(np.ones_like(out))
fields = [rng.integers(0, 4, (8, 8)) for _ in range(6)]
h = hashlib.sha256(out.tobytes() + gin.tobytes() + repr((rce(fields), com_metric(fields[:3], fields[3:], 3))).encode())
print(BACKEND, h.hexdigest())
"""


@pytest.mark.skipif(_kernels is None, reason="extension not built")
def test_backends_identical_end_to_end():
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, LAYOUTDIFF_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        backend, digest = res.stdout.split()
        outs[backend] = digest
    assert set(outs) == {"cython", "python"}
    assert outs["cython"] == outs["python"]
