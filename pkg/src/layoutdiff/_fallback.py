"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``.

Every function follows the same operation order as its compiled twin, so the
two backends agree bit for bit.
"""

from collections import deque

import numpy as np


def label8(mask):
    """8-connected labeling; labels assigned in raster order of first pixel."""
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    labels = np.zeros((H, W), dtype=np.int32)
    count = 0
    for r in range(H):
        for c in range(W):
            if not mask[r, c] or labels[r, c]:
                continue
            count += 1
            labels[r, c] = count
            queue = deque([(r, c)])
            while queue:
                rr, cc = queue.pop()
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        y, x = rr + dr, cc + dc
                        if (dr or dc) and 0 <= y < H and 0 <= x < W and mask[y, x] and not labels[y, x]:
                            labels[y, x] = count
                            queue.append((y, x))
    return labels, count


def lap_solve(cost):
    """Square assignment by shortest augmenting paths with dual potentials."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = np.empty(n, dtype=np.intp)
    assign[p[1:] - 1] = np.arange(n)
    return assign


def im2col3x3(x):
    B, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.concatenate(
        [xp[:, ky:ky + H, kx:kx + W, :] for ky in range(3) for kx in range(3)], axis=-1
    )
    return cols.reshape(B * H * W, 9 * C)


def col2im3x3(cols, B, H, W, C):
    cols = cols.reshape(B, H, W, 9 * C)
    padded = np.zeros((B, H + 2, W + 2, C), dtype=cols.dtype)
    for k in range(9):
        ky, kx = divmod(k, 3)
        padded[:, ky:ky + H, kx:kx + W, :] += cols[..., k * C:(k + 1) * C]
    return np.ascontiguousarray(padded[:, 1:H + 1, 1:W + 1, :])
