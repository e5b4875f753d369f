"""Slow, obviously-correct reference implementations used by the test suites."""

import itertools
from collections import deque

import numpy as np


def brute_w1_1d(p, q):
    """Equal sizes: minimum over every matching."""
    p, q = list(p), list(q)
    return min(np.mean([abs(a - b) for a, b in zip(p, perm)]) for perm in itertools.permutations(q))


def brute_cloud_w1(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return min(np.mean([np.linalg.norm(a[i] - b[j]) for i, j in enumerate(perm)])
               for perm in itertools.permutations(range(len(b))))


def flood_fill_count(mask):
    """Breadth-first search over 8-neighbours."""
    mask = np.asarray(mask, bool)
    H, W = mask.shape
    seen = np.zeros_like(mask)
    count = 0
    for r in range(H):
        for c in range(W):
            if not mask[r, c] or seen[r, c]:
                continue
            count += 1
            seen[r, c] = True
            queue = deque([(r, c)])
            while queue:
                y, x = queue.popleft()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < H and 0 <= nx < W and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
    return count


def frechet_1d(a, b):
    """Closed form for scalar Gaussians (sample std, ddof=1, to match the covariance estimate)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return (a.mean() - b.mean()) ** 2 + (a.std(ddof=1) - b.std(ddof=1)) ** 2
