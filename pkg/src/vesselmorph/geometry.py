"""Shared 3D helpers.

Point clouds are ``(n, 3)`` float arrays throughout the package. Row order is
significant: every "per-point" output lines up row-for-row with its input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min


def as_cloud(points, *, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``points`` to a finite float64 ``(n, 3)`` array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.size == 0:
        if allow_empty:
            return arr.reshape(0, 3)
        raise ValueError("empty cloud")
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinate in cloud")
    return arr


def nearest_neighbor(query, cloud) -> tuple[int, float]:
    """Brute-force nearest point of ``cloud`` to ``query``.

    Ties go to the lowest index (``argmin`` returns the first minimum).
    """
    cloud = as_cloud(cloud)
    q = np.asarray(query, dtype=np.float64).reshape(3)
    d = np.linalg.norm(cloud - q, axis=1)
    idx = int(np.argmin(d))
    return idx, float(d[idx])


def bounding_box(cloud) -> Aabb:
    cloud = as_cloud(cloud)
    return Aabb(cloud.min(axis=0), cloud.max(axis=0))


def arc_lengths(points) -> np.ndarray:
    """Cumulative arc length at each vertex of a polyline, starting at 0."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points, n: int) -> np.ndarray:
    """Return ``n`` points evenly spaced in arc length along a polyline.

    The first and last input vertices are reproduced exactly.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        raise ValueError("degenerate polyline")
    if n < 2:
        raise ValueError("resample count must be >= 2")
    s = arc_lengths(pts)
    total = s[-1]
    if total == 0.0:
        return np.repeat(pts[:1], n, axis=0)
    targets = total * np.arange(n) / (n - 1)
    # index of the segment each target falls in; clip keeps the last target on the last segment
    seg = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, len(pts) - 2)
    span = s[seg + 1] - s[seg]
    frac = np.divide(targets - s[seg], span, out=np.zeros_like(targets), where=span > 0)
    out = pts[seg] + frac[:, None] * (pts[seg + 1] - pts[seg])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def median_spacing(points) -> float:
    """Median nearest-neighbour distance; independent of storage order."""
    from scipy.spatial import cKDTree

    pts = as_cloud(points)
    if len(pts) < 2:
        return 0.0
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(d[:, 1]))


@dataclass(frozen=True)
class Normalizer:
    """Uniform affine map sending a reference box into the unit cube."""

    offset: np.ndarray
    scale: float

    @classmethod
    def fit(cls, *clouds) -> "Normalizer":
        stacked = np.vstack([as_cloud(c) for c in clouds])
        box = bounding_box(stacked)
        scale = float(box.extent.max())
        if scale <= 0.0:
            scale = 1.0
        return cls(box.min, scale)

    def forward(self, cloud) -> np.ndarray:
        return (np.asarray(cloud, dtype=np.float64) - self.offset) / self.scale

    def inverse(self, cloud) -> np.ndarray:
        return np.asarray(cloud, dtype=np.float64) * self.scale + self.offset

    def forward_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) / self.scale

    def inverse_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) * self.scale
