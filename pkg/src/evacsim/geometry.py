"""Vectorized 2D primitives shared by the floorplan, raster and engine modules.

All coordinates are meters in the site frame (origin at the floorplan's
lower-left corner). Polygons are vertex sequences in counter-clockwise or
clockwise order; both orientations are accepted.
"""
from __future__ import annotations

import numpy as np

Segment = tuple[float, float, float, float]
Vertices = tuple[tuple[float, float], ...]


def rect(x0: float, y0: float, x1: float, y1: float) -> Vertices:
    """Axis-aligned rectangle as a vertex tuple."""
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def polygon_area(poly: Vertices) -> float:
    v = np.asarray(poly, float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(poly: Vertices) -> tuple[float, float]:
    v = np.asarray(poly, float)
    return float(v[:, 0].mean()), float(v[:, 1].mean())


def polygon_bounds(poly: Vertices) -> tuple[float, float, float, float]:
    v = np.asarray(poly, float)
    return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())


def polygon_edges(poly: Vertices) -> list[Segment]:
    n = len(poly)
    return [(*poly[i], *poly[(i + 1) % n]) for i in range(n)]


def segment_distance(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance from each point to each segment.

    points: (N, 2); segments: (M, 4) rows of x1, y1, x2, y2. Returns (N, M).
    Degenerate (zero-length) segments reduce to point distances.
    """
    p = np.asarray(points, float)[:, None, :]
    s = np.asarray(segments, float)
    a = s[None, :, 0:2]
    d = s[None, :, 2:4] - a
    len2 = (d * d).sum(-1)
    t = ((p - a) * d).sum(-1) / np.where(len2 > 0, len2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * d
    return np.hypot(*(p - closest).transpose(2, 0, 1))


def points_in_polygon(points: np.ndarray, poly: Vertices) -> np.ndarray:
    """Even-odd point-in-polygon test, vectorized over points.

    Boundary points may land on either side; callers needing a closed test
    should pair this with a distance check.
    """
    pts = np.asarray(points, float)
    x, y = pts[:, 0], pts[:, 1]
    v = np.asarray(poly, float)
    inside = np.zeros(len(pts), bool)
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (y - y1) * (x2 - x1) / np.where(y2 != y1, y2 - y1, 1.0) + x1
        inside ^= crosses & (x < xint)
    return inside


class WallField:
    """Exact clearance queries against a set of wall segments and solid polygons.

    Points inside a solid polygon or outside the site get distance 0 so that
    any positive clearance requirement rejects them.
    """

    def __init__(
        self,
        segments: list[Segment] | np.ndarray,
        solids: list[Vertices],
        site_length: float,
        site_width: float,
    ):
        segs = list(segments)
        for poly in solids:
            segs.extend(polygon_edges(poly))
        self.segments = np.asarray(segs, float).reshape(-1, 4)
        self.solids = list(solids)
        self.site_length = float(site_length)
        self.site_width = float(site_width)
        # bbox per segment, padded on demand by callers
        self._seg_bounds = np.stack(
            [
                np.minimum(self.segments[:, 0], self.segments[:, 2]),
                np.minimum(self.segments[:, 1], self.segments[:, 3]),
                np.maximum(self.segments[:, 0], self.segments[:, 2]),
                np.maximum(self.segments[:, 1], self.segments[:, 3]),
            ],
            axis=1,
        ) if len(self.segments) else np.zeros((0, 4))

    def segments_near(self, x: float, y: float, radius: float) -> np.ndarray:
        """Indices of segments whose bbox is within ``radius`` of (x, y)."""
        b = self._seg_bounds
        if not len(b):
            return np.zeros(0, int)
        m = (
            (x >= b[:, 0] - radius)
            & (x <= b[:, 2] + radius)
            & (y >= b[:, 1] - radius)
            & (y <= b[:, 3] + radius)
        )
        return np.nonzero(m)[0]

    def distance(self, points: np.ndarray, seg_idx: np.ndarray | None = None) -> np.ndarray:
        """Clearance of each point: min distance to walls/solid boundaries,
        0 if inside a solid or outside the site."""
        pts = np.atleast_2d(np.asarray(points, float))
        segs = self.segments if seg_idx is None else self.segments[seg_idx]
        if len(segs):
            d = segment_distance(pts, segs).min(axis=1)
        else:
            d = np.full(len(pts), np.inf)
        for poly in self.solids:
            d[points_in_polygon(pts, poly)] = 0.0
        outside = (
            (pts[:, 0] < 0)
            | (pts[:, 0] > self.site_length)
            | (pts[:, 1] < 0)
            | (pts[:, 1] > self.site_width)
        )
        d[outside] = 0.0
        return d


def occupancy_grid(
    site_length: float,
    site_width: float,
    segments: list[Segment] | np.ndarray,
    solids: list[Vertices],
    resolution: float = 0.1,
    inflation: float = 0.0,
) -> np.ndarray:
    """Boolean blocked mask over the site, indexed [iy, ix].

    Cell centers sit at ((ix + 0.5) * h, (iy + 0.5) * h). A cell is blocked
    when its center lies within max(inflation, h/2) of any wall segment or
    solid polygon boundary, or inside a solid polygon. The h/2 floor makes
    zero-thickness walls block the cells they pass through even uninflated.
    """
    h = resolution
    nx = int(round(site_length / h))
    ny = int(round(site_width / h))
    xs = (np.arange(nx) + 0.5) * h
    ys = (np.arange(ny) + 0.5) * h
    blocked = np.zeros((ny, nx), bool)
    thresh = max(inflation, 0.5 * h)

    edge_segs = list(np.asarray(list(segments), float).reshape(-1, 4))
    for poly in solids:
        edge_segs.extend(polygon_edges(poly))
        x0, y0, x1, y1 = polygon_bounds(poly)
        ix = np.nonzero((xs >= x0 - h) & (xs <= x1 + h))[0]
        iy = np.nonzero((ys >= y0 - h) & (ys <= y1 + h))[0]
        if len(ix) and len(iy):
            gx, gy = np.meshgrid(xs[ix], ys[iy])
            pts = np.column_stack([gx.ravel(), gy.ravel()])
            inside = points_in_polygon(pts, poly).reshape(len(iy), len(ix))
            blocked[np.ix_(iy, ix)] |= inside

    # per-segment local windows keep this cheap on the full 64 m canvas
    for seg in edge_segs:
        sx0, sx1 = sorted((seg[0], seg[2]))
        sy0, sy1 = sorted((seg[1], seg[3]))
        ix = np.nonzero((xs >= sx0 - thresh) & (xs <= sx1 + thresh))[0]
        iy = np.nonzero((ys >= sy0 - thresh) & (ys <= sy1 + thresh))[0]
        if not len(ix) or not len(iy):
            continue
        gx, gy = np.meshgrid(xs[ix], ys[iy])
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        d = segment_distance(pts, np.asarray(seg, float).reshape(1, 4))[:, 0]
        blocked[np.ix_(iy, ix)] |= (d <= thresh).reshape(len(iy), len(ix))
    return blocked
