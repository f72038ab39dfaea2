"""Carry a centerline deformation over to the vessel points and along time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_cloud
from .segmentation import Centerline

# clinical acquisition grid (fraction of the R-R interval) and its image in [0, 1]
CLINICAL_PHASES = (0.30, 0.45, 0.60, 0.75)


def clinical_phase_to_t(phase: float, first: float = CLINICAL_PHASES[0],
                        last: float = CLINICAL_PHASES[-1]) -> float:
    return (phase - first) / (last - first)


@dataclass(frozen=True)
class CuboidParams:
    length: float = 1.0
    width: float | None = None

    def __post_init__(self):
        if self.width is None:
            object.__setattr__(self, "width", self.length)
        if not (self.length > 0 and self.width > 0):
            raise ValueError("cuboid length and width must be > 0")


@dataclass(frozen=True)
class Frame4D:
    phase: float
    cloud: np.ndarray


@dataclass
class CardiacSequence:
    frames: list[Frame4D]

    @property
    def phases(self) -> list[float]:
        return [f.phase for f in self.frames]


def cross_section_axes(tangent) -> tuple[np.ndarray, np.ndarray]:
    """Fixed orthonormal completion of ``tangent``.

    A square cross-section is not rotation invariant, so the completion must
    be deterministic: the first axis is ``tangent x e_k`` for the world axis
    ``e_k`` least aligned with the tangent.
    """
    t = np.asarray(tangent, dtype=np.float64)
    ref = np.eye(3)[int(np.argmin(np.abs(t)))]
    e1 = np.cross(t, ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(t, e1)


def _in_cuboid(offsets, tangent, params: CuboidParams, h: float) -> np.ndarray:
    e1, e2 = cross_section_axes(tangent)
    tol = 1e-12 * max(params.length, params.width, h)
    return ((np.abs(offsets @ tangent) <= h / 2 + tol)
            & (np.abs(offsets @ e1) <= params.length / 2 + tol)
            & (np.abs(offsets @ e2) <= params.width / 2 + tol))


def cuboid_extract(vessel, center, tangent, params: CuboidParams, h: float) -> np.ndarray:
    """Indices of vessel points inside the cuboid around one centerline station.

    The height axis (extent ``h``) follows ``tangent``; the ``length x width``
    cross-section is perpendicular to it. Boundaries are inclusive.
    """
    pts = as_cloud(vessel)
    t = np.asarray(tangent, dtype=np.float64)
    t = t / np.linalg.norm(t)
    offsets = pts - np.asarray(center, dtype=np.float64)
    return np.flatnonzero(_in_cuboid(offsets, t, params, h))


def station_geometry(chain: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit tangents and heights ``|c_i - c_{i-1}|`` for an ordered chain.

    The first station borrows the height of the second. Zero-length
    tangents come back as zero vectors and get no cuboid.
    """
    n = len(chain)
    tangents = np.zeros_like(chain)
    heights = np.zeros(n)
    if n < 2:
        return tangents, heights
    step = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    heights[1:] = step
    heights[0] = step[0]
    tangents[0] = chain[1] - chain[0]
    tangents[-1] = chain[-1] - chain[-2]
    tangents[1:-1] = chain[2:] - chain[:-2]
    norm = np.linalg.norm(tangents, axis=1)
    ok = norm > 0
    tangents[ok] /= norm[ok, None]
    return tangents, heights


@dataclass
class Assignment:
    field: np.ndarray
    owner: np.ndarray
    covered: np.ndarray


def assign_field(vessel, centerline: Centerline, field, params: CuboidParams | None = None) -> Assignment:
    """Give every vessel point the displacement of the station that owns it.

    Stations are the centerline points; within each segment they are taken
    as an ordered chain in storage order. A vessel point inside several
    cuboids goes to the nearest station centre, one inside none to the
    nearest station overall.
    """
    params = params or CuboidParams()
    pts = as_cloud(vessel)
    stations = centerline.points
    field = np.asarray(field, dtype=np.float64)
    if len(stations) == 0:
        raise ValueError("empty centerline")
    if field.shape != stations.shape:
        raise ValueError("field must provide one vector per centerline point")

    best_dist = np.full(len(pts), np.inf)
    owner = np.full(len(pts), -1, dtype=np.int64)
    tree = cKDTree(pts)
    seg_ids = centerline.segment_ids if centerline.segment_ids is not None else np.zeros(len(stations), int)
    for seg in np.unique(seg_ids[seg_ids >= 0]):
        idx = np.flatnonzero(seg_ids == seg)
        tangents, heights = station_geometry(stations[idx])
        for k, station in enumerate(idx):
            if heights[k] <= 0 or not np.any(tangents[k]):
                continue
            reach = 0.5 * np.sqrt(heights[k] ** 2 + params.length ** 2 + params.width ** 2)
            cand = np.asarray(tree.query_ball_point(stations[station], reach), dtype=np.int64)
            if cand.size == 0:
                continue
            offsets = pts[cand] - stations[station]
            cand = cand[_in_cuboid(offsets, tangents[k], params, heights[k])]
            d = np.linalg.norm(pts[cand] - stations[station], axis=1)
            better = d < best_dist[cand]
            best_dist[cand[better]] = d[better]
            owner[cand[better]] = station

    covered = owner >= 0
    if not np.all(covered):
        _, nearest = cKDTree(stations).query(pts[~covered])
        owner[~covered] = nearest
    return Assignment(field[owner], owner, covered)


def interpolate_field(field, t: float, allow_extrapolation: bool = False) -> np.ndarray:
    if not allow_extrapolation and not 0.0 <= t <= 1.0:
        raise ValueError(f"phase {t} outside [0, 1]")
    return t * np.asarray(field, dtype=np.float64)


def apply_registration(vessel, field) -> np.ndarray:
    pts = as_cloud(vessel)
    field = np.asarray(field, dtype=np.float64)
    if field.shape != pts.shape:
        raise ValueError(f"field shape {field.shape} does not match cloud shape {pts.shape}")
    return pts + field


def synthesize_4d(vessel, field, phases) -> CardiacSequence:
    phases = [float(p) for p in phases]
    if any(not 0.0 <= p <= 1.0 for p in phases):
        raise ValueError("phases must lie in [0, 1]")
    if any(b <= a for a, b in zip(phases, phases[1:])):
        raise ValueError("phases must be strictly increasing")
    pts = as_cloud(vessel)
    return CardiacSequence([Frame4D(p, apply_registration(pts, interpolate_field(field, p))) for p in phases])
