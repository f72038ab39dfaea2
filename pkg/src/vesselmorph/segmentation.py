"""Cube-outdegree classification and segmentation of centerline points.

A point's outdegree is the number of faces of an axis-aligned cube centred on
it that the centerline passes through. One face means a free end, two a
point inside a vessel, three or more a bifurcation.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import as_cloud, median_spacing

logger = logging.getLogger(__name__)

BRANCH_SEGMENT = -1


class PointAttribute(str, enum.Enum):
    START = "start"
    MIDDLE = "middle"
    BRANCH = "branch"


class IsolatedPointError(ValueError):
    """Raised when a point's cube touches no face at all."""


@dataclass(frozen=True)
class CubeParams:
    """Cube edge ``l``, face threshold ``epsilon`` and extremity tolerance.

    ``face_rule="exit"`` groups the neighbours lying within ``l/4`` of the
    cube surface into connected runs (link distance ``l/4``), one run per
    place the curve leaves the cube, and counts the face nearest to the
    outermost point of each run when that point is within ``epsilon`` of
    it. ``"any"`` counts every face some neighbour is within ``epsilon``
    of; that overcounts curves leaving near a cube edge or corner.

    ``tol_face`` bounds how far a neighbour may sit beyond a one-face point
    (towards the untouched side) before the point stops being a free end.
    Defaults to ``epsilon / 4``.
    """

    l: float
    epsilon: float
    face_rule: str = "exit"
    tol_face: float | None = None

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("cube edge must be positive")
        if not 0 < self.epsilon < self.l / 2:
            raise ValueError("epsilon must lie in (0, l/2)")
        if self.face_rule not in ("exit", "any"):
            raise ValueError(f"unknown face rule {self.face_rule!r}")
        if self.tol_face is None:
            object.__setattr__(self, "tol_face", self.epsilon / 4.0)
        elif self.tol_face < 0:
            raise ValueError("tol_face must be non-negative")

    @classmethod
    def from_spacing(cls, points, edge_factor: float = 6.0, eps_fraction: float = 0.25,
                     **kwargs) -> "CubeParams":
        """Defaults scaled to the sampling density of ``points``.

        The face band ``(l/2 - eps, l/2)`` has to be wider than the point
        spacing, otherwise a uniformly sampled line can step over it.
        """
        s = median_spacing(points)
        if s <= 0:
            raise ValueError("cannot derive cube size from coincident points")
        l = edge_factor * s
        return cls(l=l, epsilon=eps_fraction * l, **kwargs)


@dataclass
class Centerline:
    points: np.ndarray
    attributes: list[PointAttribute] | None = None
    segment_ids: np.ndarray | None = None

    def __post_init__(self):
        self.points = as_cloud(self.points)
        n = len(self.points)
        if self.attributes is not None and len(self.attributes) != n:
            raise ValueError("attributes length differs from point count")
        if self.segment_ids is not None:
            self.segment_ids = np.asarray(self.segment_ids, dtype=np.int64)
            if len(self.segment_ids) != n:
                raise ValueError("segment_ids length differs from point count")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_segmented(self) -> bool:
        return self.segment_ids is not None

    @property
    def segment_count(self) -> int:
        if self.segment_ids is None:
            return 0
        return len(np.unique(self.segment_ids[self.segment_ids >= 0]))

    def segment_indices(self) -> dict[int, np.ndarray]:
        """Map segment id to the indices of its points, in storage order."""
        if self.segment_ids is None:
            raise ValueError("centerline is not segmented")
        return {int(k): np.flatnonzero(self.segment_ids == k)
                for k in np.unique(self.segment_ids) if k >= 0}

    def branch_indices(self) -> np.ndarray:
        if self.segment_ids is None:
            raise ValueError("centerline is not segmented")
        return np.flatnonzero(self.segment_ids == BRANCH_SEGMENT)


def _neighbor_offsets(x, pts, l, tree=None):
    half = l / 2.0
    if tree is None:
        d = pts - x
        inside = np.all(np.abs(d) < half, axis=1)
        idx = np.flatnonzero(inside)
    else:
        idx = np.asarray(sorted(tree.query_ball_point(x, half, p=np.inf)), dtype=np.int64)
        if idx.size:
            d = pts[idx] - x
            idx = idx[np.all(np.abs(d) < half, axis=1)]
    # x itself is never its own neighbour
    idx = idx[np.any(pts[idx] != x, axis=1)]
    return idx, pts[idx] - x


def cube_neighbors(x, centerline, params: CubeParams) -> set[int]:
    """Indices of centerline points strictly inside the cube of edge ``l`` at ``x``."""
    pts = centerline.points if isinstance(centerline, Centerline) else as_cloud(centerline)
    idx, _ = _neighbor_offsets(np.asarray(x, dtype=np.float64), pts, params.l)
    return set(int(i) for i in idx)


def _face_distances(offsets: np.ndarray, half: float) -> np.ndarray:
    """Distance of each offset to the faces (+x, -x, +y, -y, +z, -z)."""
    dist = np.empty((len(offsets), 6))
    dist[:, 0::2] = half - offsets
    dist[:, 1::2] = half + offsets
    return dist


def _runs(points: np.ndarray, link: float) -> list[np.ndarray]:
    """Connected groups of ``points`` under the ``link`` distance."""
    if len(points) == 0:
        return []
    adj = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2) < link
    _, labels = connected_components(adj, directed=False)
    return [np.flatnonzero(labels == k) for k in range(labels.max() + 1)]


def _faces_hit(offsets: np.ndarray, params: CubeParams) -> np.ndarray:
    """Boolean mask over faces ordered (+x, -x, +y, -y, +z, -z)."""
    hit = np.zeros(6, dtype=bool)
    if len(offsets) == 0:
        return hit
    dist = _face_distances(offsets, params.l / 2.0)
    if params.face_rule == "any":
        return np.any(dist < params.epsilon, axis=0)
    # runs depend on l only, so a larger epsilon can add faces but never merge runs
    width = params.l / 4.0
    band = offsets[dist.min(axis=1) < width]
    for run in _runs(band, width):
        pts = band[run]
        # outermost point of the run; lexsort keeps the choice independent of storage order
        cheb = np.abs(pts).max(axis=1)
        best = np.flatnonzero(cheb == cheb.max())
        if len(best) > 1:
            best = best[np.lexsort(pts[best].T[::-1])]
        face_dist = _face_distances(pts[best[:1]], params.l / 2.0)[0]
        face = int(np.argmin(face_dist))
        if face_dist[face] < params.epsilon:
            hit[face] = True
    return hit


def outdegree(x, centerline, params: CubeParams) -> int:
    pts = centerline.points if isinstance(centerline, Centerline) else as_cloud(centerline)
    _, offsets = _neighbor_offsets(np.asarray(x, dtype=np.float64), pts, params.l)
    return int(_faces_hit(offsets, params).sum())


def _classify(x, offsets, params: CubeParams) -> PointAttribute:
    hit = _faces_hit(offsets, params)
    degree = int(hit.sum())
    if degree == 0:
        raise IsolatedPointError("isolated point")
    if degree == 2:
        return PointAttribute.MIDDLE
    if degree > 2:
        return PointAttribute.BRANCH
    # one face hit: x is a free end only if nothing lies beyond it towards the opposite face
    face = int(np.flatnonzero(hit)[0])
    axis, outward = face // 2, (1.0 if face % 2 == 0 else -1.0)
    beyond = -outward * offsets[:, axis]
    if np.any(beyond > params.tol_face):
        return PointAttribute.MIDDLE
    return PointAttribute.START


def classify_point(x_index: int, centerline, params: CubeParams) -> PointAttribute:
    pts = centerline.points if isinstance(centerline, Centerline) else as_cloud(centerline)
    x = pts[x_index]
    _, offsets = _neighbor_offsets(x, pts, params.l)
    return _classify(x, offsets, params)


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the lower root so labels follow first appearance
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def segment_centerline(centerline, params: CubeParams | None = None) -> Centerline:
    """Classify every point and split the non-branch points into segments.

    Points are visited in storage order. A start or middle point joins the
    segment of any already visited, non-branch cube neighbour; otherwise it
    opens a new segment. Branch points get segment id ``-1``. Segment ids
    are renumbered ``0..k-1`` by first appearance.
    """
    cl = centerline if isinstance(centerline, Centerline) else Centerline(centerline)
    pts = cl.points
    if params is None:
        params = CubeParams.from_spacing(pts)
    tree = cKDTree(pts)
    n = len(pts)

    attributes: list[PointAttribute] = []
    neighbors: list[np.ndarray] = []
    isolated = np.zeros(n, dtype=bool)
    for i in range(n):
        idx, offsets = _neighbor_offsets(pts[i], pts, params.l, tree)
        neighbors.append(idx)
        try:
            attributes.append(_classify(pts[i], offsets, params))
        except IsolatedPointError:
            logger.warning("isolated centerline point %d at %s; kept as its own segment", i, pts[i])
            attributes.append(PointAttribute.START)
            isolated[i] = True

    is_branch = np.array([a is PointAttribute.BRANCH for a in attributes])
    joinable = ~is_branch & ~isolated
    dsu = _DisjointSet(n)
    for i in range(n):
        if not joinable[i]:
            continue
        for j in neighbors[i]:
            if j < i and joinable[j]:
                dsu.union(i, j)

    labels = np.full(n, BRANCH_SEGMENT, dtype=np.int64)
    renumber: dict[int, int] = {}
    for i in range(n):
        if is_branch[i]:
            continue
        root = dsu.find(i)
        if root not in renumber:
            renumber[root] = len(renumber)
        labels[i] = renumber[root]
    return replace(cl, attributes=attributes, segment_ids=labels)
