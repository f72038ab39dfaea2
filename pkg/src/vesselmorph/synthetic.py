"""Synthetic paired centerlines and vessel clouds with known deformation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import as_cloud
from .segmentation import BRANCH_SEGMENT, Centerline, CubeParams, PointAttribute


@dataclass(frozen=True)
class BezierSpec:
    control_points: np.ndarray
    samples: int

    def __post_init__(self):
        ctrl = np.asarray(self.control_points, dtype=np.float64)
        if ctrl.ndim != 2 or ctrl.shape[1] != 3 or len(ctrl) < 2:
            raise ValueError("a Bezier curve needs at least 2 control points in 3D")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        object.__setattr__(self, "control_points", ctrl)


def de_casteljau(control_points, u) -> np.ndarray:
    """Evaluate a Bezier curve at parameters ``u`` (any shape, broadcast last)."""
    ctrl = np.asarray(control_points, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)[..., None, None]
    pts = np.broadcast_to(ctrl, u.shape[:-2] + ctrl.shape).copy()
    for k in range(len(ctrl) - 1, 0, -1):
        pts = (1.0 - u) * pts[..., :k, :] + u * pts[..., 1:k + 1, :]
    return pts[..., 0, :]


def bezier_curve(spec: BezierSpec) -> np.ndarray:
    u = np.arange(spec.samples) / (spec.samples - 1)
    return de_casteljau(spec.control_points, u)


# --- deformation recipes -------------------------------------------------

@dataclass(frozen=True)
class Translate:
    offset: tuple[float, float, float]

    def apply(self, points, u):
        return points + np.asarray(self.offset, dtype=np.float64)


@dataclass(frozen=True)
class Scale:
    factor: float

    def __post_init__(self):
        if self.factor == 0:
            raise ValueError("degenerate recipe: zero scale")

    def apply(self, points, u):
        # written as an increment so that factor 1 is exactly the identity
        c = points.mean(axis=0)
        return points + (self.factor - 1.0) * (points - c)


@dataclass(frozen=True)
class Bend:
    """Adds a second Bezier curve, sampled on the same parameter grid, as an offset."""

    offset_controls: tuple

    def apply(self, points, u):
        return points + de_casteljau(self.offset_controls, u)


@dataclass(frozen=True)
class Compose:
    steps: tuple

    def apply(self, points, u):
        for step in self.steps:
            points = step.apply(points, u)
        return points


def random_recipe(seed: int, magnitude: float = 0.1):
    """Translation, scale and bend composed with seeded random parameters."""
    rng = np.random.default_rng(seed)
    offset = tuple(rng.uniform(-magnitude, magnitude, 3))
    factor = float(1.0 + rng.uniform(-magnitude, magnitude))
    bend = rng.uniform(-magnitude, magnitude, (3, 3))
    bend[0] = bend[-1] = 0.0
    return Compose((Scale(factor), Bend(tuple(map(tuple, bend))), Translate(offset)))


@dataclass
class SyntheticPair:
    systole: Centerline
    diastole: Centerline
    truth_field: np.ndarray
    seed: int
    systole_cloud: np.ndarray | None = None
    diastole_cloud: np.ndarray | None = None
    cloud_truth_field: np.ndarray | None = None
    params: np.ndarray = field(default=None, repr=False)


def make_pair(spec: BezierSpec, recipe=None, seed: int = 0, *, radius: float | None = None,
              ring_count: int = 8) -> SyntheticPair:
    """Sample a Bezier centerline and deform it with ``recipe``.

    The diastolic centerline is stored as ``systole + truth_field`` so that
    applying the truth field reproduces it exactly. With ``radius`` set, a
    tube is sampled around both phases; the vessel truth gives each ring
    point its station's displacement.
    """
    if recipe is None:
        recipe = random_recipe(seed)
    u = np.arange(spec.samples) / (spec.samples - 1)
    sys_pts = de_casteljau(spec.control_points, u)
    truth = recipe.apply(sys_pts, u) - sys_pts
    dia_pts = sys_pts + truth
    pair = SyntheticPair(Centerline(sys_pts), Centerline(dia_pts), truth, seed, params=u)
    if radius is not None:
        pair.systole_cloud = tube_sample(sys_pts, radius, ring_count, seed)
        pair.diastole_cloud = tube_sample(dia_pts, radius, ring_count, seed)
        pair.cloud_truth_field = np.repeat(truth, ring_count, axis=0)
    return pair


def _tangents(points: np.ndarray) -> np.ndarray:
    t = np.empty_like(points)
    t[0] = points[1] - points[0]
    t[-1] = points[-1] - points[-2]
    t[1:-1] = points[2:] - points[:-2]
    norm = np.linalg.norm(t, axis=1)
    if np.any(norm == 0):
        raise ValueError("degenerate tangent: coincident consecutive points")
    return t / norm[:, None]


def _perpendicular_frame(tangent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.eye(3)[int(np.argmin(np.abs(tangent)))]
    e1 = np.cross(tangent, ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(tangent, e1)


def tube_sample(centerline, radius: float, ring_count: int, seed: int = 0) -> np.ndarray:
    """Rings of ``ring_count`` points at distance ``radius`` around every station.

    Output is station-major: rows ``k * ring_count .. (k + 1) * ring_count``
    belong to station ``k``. The seed only rotates the rings.
    """
    if not radius > 0:
        raise ValueError("radius must be > 0")
    if ring_count < 3:
        raise ValueError("ring_count must be >= 3")
    pts = as_cloud(centerline)
    if len(pts) < 2:
        raise ValueError("degenerate tangent: need at least 2 stations")
    tangents = _tangents(pts)
    phase = np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi)
    angles = phase + 2.0 * math.pi * np.arange(ring_count) / ring_count
    cos, sin = np.cos(angles), np.sin(angles)
    out = np.empty((len(pts) * ring_count, 3))
    for k, (p, t) in enumerate(zip(pts, tangents)):
        e1, e2 = _perpendicular_frame(t)
        out[k * ring_count:(k + 1) * ring_count] = p + radius * (cos[:, None] * e1 + sin[:, None] * e2)
    return out


# --- trees ---------------------------------------------------------------

def make_tree(n_segments: int, samples: int = 40, seed: int = 0, length: float = 1.0) -> Centerline:
    """A random branching centerline labelled by construction.

    Every Bezier branch is one segment. A child branch leaves from a sample
    of an existing segment; that sample becomes a Branch point (id ``-1``)
    and the child starts one spacing away from it.
    """
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    rng = np.random.default_rng(seed)
    spacing = length / (samples - 1)
    root = np.array([[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [0.7, -0.1, 0.05], [1.0, 0.0, 0.0]]) * length
    chunks = [de_casteljau(root, np.arange(samples) / (samples - 1))]
    labels = [np.zeros(samples, dtype=np.int64)]
    for seg in range(1, n_segments):
        parent = int(rng.integers(seg))
        owned = np.flatnonzero(labels[parent] == parent)
        # attach away from the parent's ends so junctions stay interior
        lo, hi = len(owned) // 4, max(len(owned) // 4 + 1, 3 * len(owned) // 4)
        at = owned[int(rng.integers(lo, hi))]
        junction = chunks[parent][at]
        labels[parent][at] = BRANCH_SEGMENT
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        child_len = length * rng.uniform(0.1, 0.8)
        bend = rng.normal(scale=0.15 * child_len, size=3)
        ctrl = np.array([
            junction,
            junction + direction * child_len / 3 + bend,
            junction + direction * child_len,
        ])
        n = max(int(round(child_len / spacing)) + 1, 4)
        u = np.arange(1, n) / (n - 1)
        chunks.append(de_casteljau(ctrl, u))
        labels.append(np.full(n - 1, seg, dtype=np.int64))
    points = np.vstack(chunks)
    ids = np.concatenate(labels)
    attributes = [PointAttribute.BRANCH if k == BRANCH_SEGMENT else PointAttribute.MIDDLE for k in ids]
    return Centerline(points, attributes, ids)


@dataclass
class DropResult:
    centerline: Centerline
    kept: np.ndarray
    dropped_segments: list[int]
    achieved: float
    cloud: np.ndarray | None = None
    cloud_kept: np.ndarray | None = None


def _pick_subset(sizes: list[int], budget: int, rng) -> list[int]:
    """Subset of item indices with the largest total size not above ``budget``."""
    order = rng.permutation(len(sizes))
    # parent[s] = (item, previous sum) recorded the first time sum s is reached
    parent: dict[int, tuple[int, int]] = {0: (-1, -1)}
    for item in order:
        size = sizes[item]
        for total in sorted(parent, reverse=True):
            new = total + size
            if new <= budget and new not in parent:
                parent[new] = (int(item), total)
    best = max(parent)
    chosen = []
    while best:
        item, best = parent[best]
        chosen.append(item)
    return sorted(chosen)


def drop_branches(tree: Centerline, proportion: float, seed: int = 0, cloud=None,
                  params: CubeParams | None = None) -> DropResult:
    """Remove whole segments to simulate vessels that failed to image.

    Picks, among segment subsets whose point count is at most
    ``proportion`` of all segment points, one with the largest count (ties
    settled by a seeded item order). The achieved fraction is measured over
    segment points. A branch point goes only when every segment next to it
    is gone. Vessel points in ``cloud`` follow their nearest centerline
    point.
    """
    if not 0 <= proportion < 1:
        raise ValueError("proportion must lie in [0, 1)")
    if not tree.is_segmented:
        raise ValueError("tree must be segmented")
    segs = tree.segment_indices()
    ids = sorted(segs)
    sizes = [len(segs[k]) for k in ids]
    total = sum(sizes)
    budget = int(math.floor(proportion * total + 1e-9))
    chosen = _pick_subset(sizes, budget, np.random.default_rng(seed))
    dropped = [ids[i] for i in chosen]

    keep = ~np.isin(tree.segment_ids, dropped)
    branch = tree.branch_indices()
    if len(branch):
        params = params or CubeParams.from_spacing(tree.points)
        half = params.l / 2.0
        bpts = tree.points[branch]
        tree_idx = cKDTree(tree.points)
        adj = np.max(np.abs(bpts[:, None] - bpts[None]), axis=2) < half
        _, cluster = connected_components(adj, directed=False)
        for c in np.unique(cluster):
            members = branch[cluster == c]
            near = set()
            for p in tree.points[members]:
                for j in tree_idx.query_ball_point(p, half, p=np.inf):
                    if tree.segment_ids[j] >= 0:
                        near.add(int(tree.segment_ids[j]))
            if near and near.issubset(dropped):
                keep[members] = False

    attrs = None if tree.attributes is None else [a for a, k in zip(tree.attributes, keep) if k]
    pruned = Centerline(tree.points[keep], attrs, tree.segment_ids[keep])
    achieved = (sum(sizes[i] for i in chosen) / total) if total else 0.0
    result = DropResult(pruned, keep, dropped, achieved)
    if cloud is not None:
        cloud = as_cloud(cloud)
        _, owner = cKDTree(tree.points).query(cloud)
        result.cloud_kept = keep[owner]
        result.cloud = cloud[result.cloud_kept]
    return result
