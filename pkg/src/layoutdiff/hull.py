"""Convex hull of training dimensions and the ID/OOD test built on it."""

from dataclasses import dataclass

from .layout import DimSpec

MIN_OOD_SIZE = 4


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class DimHull:
    """Hull vertices as (width, height) pairs, counter-clockwise.

    One vertex means all points coincided; two mean they were collinear.
    """

    vertices: tuple[tuple[float, float], ...]

    def contains(self, point) -> bool:
        p = (float(point[0]), float(point[1]))
        v = self.vertices
        if len(v) == 1:
            return p == v[0]
        if len(v) == 2:
            a, b = v
            if _cross(a, b, p) != 0:
                return False
            return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
        n = len(v)
        return all(_cross(v[i], v[(i + 1) % n], p) >= 0 for i in range(n))


def build_hull(points) -> DimHull:
    """Andrew's monotone chain; collinear boundary points are dropped."""
    pts = sorted({(float(p[0]), float(p[1])) for p in (_as_pair(q) for q in points)})
    if not pts:
        raise ValueError("convex hull needs at least one point")
    if len(pts) <= 2:
        return DimHull(tuple(pts))

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and hull[0] == hull[1]:
        hull = hull[:1]
    return DimHull(tuple(hull))


def _as_pair(p):
    if isinstance(p, DimSpec):
        return p.as_tuple()
    return (p[0], p[1])


def classify_dim(hull: DimHull, d) -> str:
    """'ID' when ``d`` lies inside or on the hull, else 'OOD'."""
    return "ID" if hull.contains(_as_pair(d)) else "OOD"


def sample_ood_targets(hull: DimHull, n: int, bounds: DimSpec, rng, max_tries: int = 1_000_000) -> list[DimSpec]:
    """``n`` integer dimension targets outside the hull, within [4, W] x [4, H]."""
    xs = [v[0] for v in hull.vertices]
    ys = [v[1] for v in hull.vertices]
    if bounds.width < max(xs) or bounds.height < max(ys):
        raise ValueError("bounds must cover the hull extent")
    out: list[DimSpec] = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("could not find points outside the hull within bounds")
        w = int(rng.integers(MIN_OOD_SIZE, bounds.width + 1))
        h = int(rng.integers(MIN_OOD_SIZE, bounds.height + 1))
        if not hull.contains((w, h)):
            out.append(DimSpec(w, h))
    return out

