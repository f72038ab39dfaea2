"""Rigid ICP baseline (nearest-neighbour correspondences + Kabsch fit)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .geometry import as_cloud

logger = logging.getLogger(__name__)


class DegenerateConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return as_cloud(points) @ self.rotation.T + self.translation

    def interpolate(self, s: float) -> "RigidTransform":
        """Fraction ``s`` of the motion: rotation angle and translation both scaled by ``s``."""
        rotvec = Rotation.from_matrix(self.rotation).as_rotvec()
        return RigidTransform(Rotation.from_rotvec(s * rotvec).as_matrix(), s * self.translation)


def fit_rigid(source, target) -> RigidTransform:
    """Least-squares rotation and translation taking ``source`` rows onto ``target`` rows."""
    src, dst = as_cloud(source), as_cloud(target)
    if src.shape != dst.shape:
        raise ValueError("fit_rigid needs matched point sets")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, sv, vt = np.linalg.svd(h)
    if sv[0] == 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateConfigurationError("degenerate configuration")
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cd - rot @ cs)


def rigid_icp(source, target, max_iters: int = 100, tol: float = 1e-12):
    """Align ``source`` to ``target``; returns ``(transform, transformed_source, mse_history)``.

    An iteration is accepted only if it does not raise the mean squared
    correspondence error; iteration stops once the improvement drops below
    ``tol``.
    """
    src, dst = as_cloud(source), as_cloud(target)
    if len(src) < 3 or len(dst) < 3:
        raise DegenerateConfigurationError("degenerate configuration")
    tree = cKDTree(dst)
    transform = RigidTransform.identity()
    current = src
    dist, idx = tree.query(current)
    err = float(np.mean(dist ** 2))
    history = [err]
    for it in range(max_iters):
        candidate = fit_rigid(src, dst[idx])
        moved = candidate.apply(src)
        new_dist, new_idx = tree.query(moved)
        new_err = float(np.mean(new_dist ** 2))
        if new_err > err:
            break
        transform, current, idx = candidate, moved, new_idx
        improvement = err - new_err
        err = new_err
        history.append(err)
        if improvement < tol:
            break
    logger.debug("ICP finished after %d iterations, mse %.3g", len(history) - 1, err)
    return transform, current, history
