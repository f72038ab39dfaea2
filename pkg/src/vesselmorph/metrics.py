"""Chamfer and Hausdorff distances between point clouds.

Reported values are scaled by 100; all arithmetic uses the raw values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_cloud

REPORT_SCALE = 100.0
CD_FORMULA = "CD = mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2"
HD_FORMULA = "HD = max(max_a min_b |a-b|, max_b min_a |a-b|)"


def directed_sq_distances(a, b) -> np.ndarray:
    """Squared distance from every point of ``a`` to its nearest point of ``b``."""
    a, b = as_cloud(a), as_cloud(b)
    _, idx = cKDTree(b).query(a)
    diff = a - b[idx]
    return np.sum(diff * diff, axis=1)


def directed_distances(a, b) -> np.ndarray:
    """Distance from every point of ``a`` to its nearest point of ``b``."""
    return np.sqrt(directed_sq_distances(a, b))


@dataclass(frozen=True)
class MetricReport:
    cd_raw: float
    hd_raw: float
    cd_ab: float
    cd_ba: float
    hd_ab: float
    hd_ba: float

    @property
    def cd_scaled(self) -> float:
        return REPORT_SCALE * self.cd_raw

    @property
    def hd_scaled(self) -> float:
        return REPORT_SCALE * self.hd_raw

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(cd_scaled=self.cd_scaled, hd_scaled=self.hd_scaled,
                   scale=REPORT_SCALE, cd_formula=CD_FORMULA, hd_formula=HD_FORMULA)
        return out

    def to_text(self) -> str:
        rows = [
            ("CD (x100)", self.cd_scaled), ("HD (x100)", self.hd_scaled),
            ("CD raw", self.cd_raw), ("HD raw", self.hd_raw),
            ("CD a->b", self.cd_ab), ("CD b->a", self.cd_ba),
            ("HD a->b", self.hd_ab), ("HD b->a", self.hd_ba),
        ]
        lines = [f"{name:<12}{value:>16.9g}" for name, value in rows]
        return "\n".join(lines + [CD_FORMULA, HD_FORMULA])


def compare(a, b) -> MetricReport:
    sq_ab = directed_sq_distances(a, b)
    sq_ba = directed_sq_distances(b, a)
    cd_ab, cd_ba = float(np.mean(sq_ab)), float(np.mean(sq_ba))
    hd_ab, hd_ba = float(np.sqrt(sq_ab.max())), float(np.sqrt(sq_ba.max()))
    return MetricReport(cd_ab + cd_ba, max(hd_ab, hd_ba), cd_ab, cd_ba, hd_ab, hd_ba)


def chamfer(a, b) -> float:
    return compare(a, b).cd_raw


def hausdorff(a, b) -> float:
    return compare(a, b).hd_raw
