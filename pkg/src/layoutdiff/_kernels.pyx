# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Each function mirrors one in ``_fallback`` operation for operation."""

import numpy as np

ctypedef fused real_t:
    float
    double


def label8(const unsigned char[:, ::1] mask):
    """8-connected labeling; labels assigned in raster order of first pixel."""
    cdef Py_ssize_t H = mask.shape[0], W = mask.shape[1]
    labels_arr = np.zeros((H, W), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    stack_arr = np.empty(H * W + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = stack_arr
    cdef Py_ssize_t r, c, rr, cc, top, idx
    cdef int dr, dc, count = 0
    for r in range(H):
        for c in range(W):
            if mask[r, c] == 0 or labels[r, c] != 0:
                continue
            count += 1
            labels[r, c] = count
            top = 0
            stack[top] = r * W + c
            top += 1
            while top > 0:
                top -= 1
                idx = stack[top]
                rr = idx // W
                cc = idx - rr * W
                for dr in range(-1, 2):
                    for dc in range(-1, 2):
                        if dr == 0 and dc == 0:
                            continue
                        if rr + dr < 0 or rr + dr >= H or cc + dc < 0 or cc + dc >= W:
                            continue
                        if mask[rr + dr, cc + dc] != 0 and labels[rr + dr, cc + dc] == 0:
                            labels[rr + dr, cc + dc] = count
                            stack[top] = (rr + dr) * W + cc + dc
                            top += 1
    return labels_arr, count


def lap_solve(const double[:, ::1] cost):
    """Square assignment by shortest augmenting paths with dual potentials."""
    cdef Py_ssize_t n = cost.shape[0]
    cdef double INF = np.inf
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    minv_arr = np.empty(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.intp)
    way_arr = np.zeros(n + 1, dtype=np.intp)
    used_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef Py_ssize_t[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INF
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j] == 0:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
            for j in range(1, n + 1):
                if used[j] == 0 and minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = np.empty(n, dtype=np.intp)
    for j in range(1, n + 1):
        assign[p_arr[j] - 1] = j - 1
    return assign


def im2col3x3(real_t[:, :, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    dtype = np.float32 if real_t is float else np.float64
    out = np.zeros((B, H, W, 9 * C), dtype=dtype)
    cdef real_t[:, :, :, ::1] o = out
    cdef Py_ssize_t b, y, xx, k, ky, kx, c, sy, sx
    for b in range(B):
        for y in range(H):
            for xx in range(W):
                for k in range(9):
                    ky = k // 3
                    kx = k - 3 * ky
                    sy = y + ky - 1
                    sx = xx + kx - 1
                    if sy < 0 or sy >= H or sx < 0 or sx >= W:
                        continue
                    for c in range(C):
                        o[b, y, xx, k * C + c] = x[b, sy, sx, c]
    return out.reshape(B * H * W, 9 * C)


def col2im3x3(real_t[:, ::1] cols, Py_ssize_t B, Py_ssize_t H, Py_ssize_t W, Py_ssize_t C):
    dtype = np.float32 if real_t is float else np.float64
    padded = np.zeros((B, H + 2, W + 2, C), dtype=dtype)
    cdef real_t[:, :, :, ::1] dp = padded
    cdef Py_ssize_t b, y, xx, k, ky, kx, c, row
    for k in range(9):
        ky = k // 3
        kx = k - 3 * ky
        for b in range(B):
            for y in range(H):
                for xx in range(W):
                    row = (b * H + y) * W + xx
                    for c in range(C):
                        dp[b, y + ky, xx + kx, c] += cols[row, k * C + c]
    return np.ascontiguousarray(padded[:, 1:H + 1, 1:W + 1, :])
