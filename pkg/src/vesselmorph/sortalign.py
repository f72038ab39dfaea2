"""Deformation field of paired centerline segments by trend-axis sorting.

Centerline points come in no particular order, so subtracting the two
phases row by row is meaningless. Each segment is first sorted along the
axis on which it extends the most, both phases are resampled to a common
count, and only then are they subtracted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import as_cloud, resample_polyline
from .segmentation import Centerline

AXIS_NAMES = "xyz"


class Span(NamedTuple):
    sx: float
    sy: float
    sz: float


def span(segment) -> Span:
    pts = as_cloud(segment)
    return Span(*(float(v) for v in np.abs(pts.max(axis=0) - pts.min(axis=0))))


def trend_axis(s) -> int:
    """Axis (0, 1, 2) of the largest span; ties resolve x before y before z."""
    return int(np.argmax(np.asarray(s, dtype=np.float64)))


def sort_by_trend(segment, axis: int) -> np.ndarray:
    pts = as_cloud(segment)
    return pts[np.argsort(pts[:, axis], kind="stable")]


@dataclass
class SegmentPairing:
    systole: np.ndarray
    diastole: np.ndarray
    trend_axis: int
    resampled_count: int
    systole_id: int = -1
    diastole_id: int = -1
    centroid_distance: float = 0.0


@dataclass
class PairingResult:
    pairs: list[SegmentPairing]
    unmatched_systole: list[int] = field(default_factory=list)
    unmatched_diastole: list[int] = field(default_factory=list)


def _resample(points: np.ndarray, n: int) -> np.ndarray:
    if len(points) == 1:
        return np.repeat(points, n, axis=0)
    return resample_polyline(points, n)


def pair_segment_points(systole, diastole, count: int | None = None) -> SegmentPairing:
    """Sort two corresponding segments along the systolic trend axis and resample.

    Sorting happens before resampling so the polyline being resampled
    follows the trend instead of the arbitrary storage order. Resampled
    points of a polyline that is monotone along the axis stay monotone, so
    the final sort is a no-op that merely enforces the invariant.
    """
    sys_pts = as_cloud(systole)
    dia_pts = as_cloud(diastole)
    axis = trend_axis(span(sys_pts))
    n = count if count is not None else max(len(sys_pts), len(dia_pts), 2)
    sys_sorted = sort_by_trend(sys_pts, axis)
    dia_sorted = sort_by_trend(dia_pts, axis)
    sys_res = sort_by_trend(_resample(sys_sorted, n), axis)
    dia_res = sort_by_trend(_resample(dia_sorted, n), axis)
    return SegmentPairing(sys_res, dia_res, axis, n)


def pair_segments(systole: Centerline, diastole: Centerline) -> PairingResult:
    """Match segments across phases greedily by centroid distance.

    The globally closest unmatched pair of centroids is taken first; ties
    go to the lower (systole id, diastole id).
    """
    if not (systole.is_segmented and diastole.is_segmented):
        raise ValueError("both centerlines must be segmented")
    sys_segs = systole.segment_indices()
    dia_segs = diastole.segment_indices()
    if not sys_segs or not dia_segs:
        raise ValueError("no segments")
    sys_ids, dia_ids = sorted(sys_segs), sorted(dia_segs)
    sys_cent = np.array([systole.points[sys_segs[k]].mean(axis=0) for k in sys_ids])
    dia_cent = np.array([diastole.points[dia_segs[k]].mean(axis=0) for k in dia_ids])
    dist = np.linalg.norm(sys_cent[:, None, :] - dia_cent[None, :, :], axis=2)

    order = sorted((dist[i, j], i, j) for i in range(len(sys_ids)) for j in range(len(dia_ids)))
    used_s, used_d = set(), set()
    pairs = []
    for d, i, j in order:
        if i in used_s or j in used_d:
            continue
        used_s.add(i)
        used_d.add(j)
        sp = systole.points[sys_segs[sys_ids[i]]]
        dp = diastole.points[dia_segs[dia_ids[j]]]
        pairing = pair_segment_points(sp, dp)
        pairing.systole_id, pairing.diastole_id = sys_ids[i], dia_ids[j]
        pairing.centroid_distance = float(d)
        pairs.append(pairing)
        if len(used_s) == len(sys_ids) or len(used_d) == len(dia_ids):
            break
    pairs.sort(key=lambda p: p.systole_id)
    return PairingResult(
        pairs,
        [sys_ids[i] for i in range(len(sys_ids)) if i not in used_s],
        [dia_ids[j] for j in range(len(dia_ids)) if j not in used_d],
    )


def field_by_subtraction(pairing: SegmentPairing) -> np.ndarray:
    """Per-station displacement ``diastole[k] - systole[k]`` of a sorted pairing."""
    if pairing.systole.shape != pairing.diastole.shape:
        raise ValueError(
            f"pairing length mismatch: {len(pairing.systole)} vs {len(pairing.diastole)}")
    return pairing.diastole - pairing.systole
