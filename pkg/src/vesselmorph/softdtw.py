"""Soft-DTW between point sequences and a direct optimizer for displacements.

The value is the smoothed minimum, over every monotone alignment path from
``(0, 0)`` to ``(n-1, m-1)``, of the summed squared distances along the
path. The optimizer searches the displacement field ``D`` that brings
``C_s + D`` onto the target sequence under that loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .geometry import as_cloud

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SoftDtwParams:
    gamma: float = 0.1
    step_size: float = 1e-2
    iterations: int = 2000
    smoothness_weight: float = 0.1
    momentum: float = 0.0
    tol: float = 1e-10

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.smoothness_weight < 0:
            raise ValueError("smoothness_weight must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class AlignmentResult:
    loss: float
    field: np.ndarray
    loss_history: list[float] = field(default_factory=list)
    iterations: int = 0


def pairwise_sq_dist(a, b) -> np.ndarray:
    a = as_cloud(a)
    b = as_cloud(b)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def softmin(values, gamma: float) -> float:
    """``-gamma * log(sum(exp(-v / gamma)))`` shifted by the minimum for stability."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("softmin of an empty sequence")
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    lo = v.min()
    if not np.isfinite(lo):
        return float(lo)
    return float(lo - gamma * np.log(np.sum(np.exp(-(v - lo) / gamma))))


@njit(cache=True)
def _softmin3(a, b, c, gamma):
    lo = min(a, b, c)
    if lo == np.inf:
        return np.inf
    total = np.exp(-(a - lo) / gamma) + np.exp(-(b - lo) / gamma) + np.exp(-(c - lo) / gamma)
    return lo - gamma * np.log(total)


@njit(cache=True)
def _forward(d, gamma):
    n, m = d.shape
    r = np.full((n + 2, m + 2), np.inf)
    r[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if gamma > 0.0:
                prev = _softmin3(r[i - 1, j], r[i, j - 1], r[i - 1, j - 1], gamma)
            else:
                prev = min(r[i - 1, j], r[i, j - 1], r[i - 1, j - 1])
            r[i, j] = d[i - 1, j - 1] + prev
    return r


@njit(cache=True)
def _backward(d, r, gamma):
    """Expected alignment matrix ``E = dR[n,m] / dD`` for the padded ``r``."""
    n, m = d.shape
    dp = np.zeros((n + 2, m + 2))
    dp[1:n + 1, 1:m + 1] = d
    r = r.copy()
    e = np.zeros((n + 2, m + 2))
    for i in range(1, n + 1):
        r[i, m + 1] = -np.inf
    for j in range(1, m + 1):
        r[n + 1, j] = -np.inf
    r[n + 1, m + 1] = r[n, m]
    e[n + 1, m + 1] = 1.0
    for j in range(m, 0, -1):
        for i in range(n, 0, -1):
            a = np.exp((r[i + 1, j] - r[i, j] - dp[i + 1, j]) / gamma)
            b = np.exp((r[i, j + 1] - r[i, j] - dp[i, j + 1]) / gamma)
            c = np.exp((r[i + 1, j + 1] - r[i, j] - dp[i + 1, j + 1]) / gamma)
            e[i, j] = e[i + 1, j] * a + e[i, j + 1] * b + e[i + 1, j + 1] * c
    return e[1:n + 1, 1:m + 1]


def soft_dtw_cost(d: np.ndarray, gamma: float) -> float:
    """Soft-DTW value of a precomputed cost matrix."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    d = np.ascontiguousarray(d, dtype=np.float64)
    r = _forward(d, gamma)
    return float(r[d.shape[0], d.shape[1]])


def soft_dtw(a, b, gamma: float) -> float:
    return soft_dtw_cost(pairwise_sq_dist(a, b), gamma)


def hard_dtw(a, b) -> float:
    """Plain DTW with the same squared-distance cost and boundary convention."""
    d = pairwise_sq_dist(a, b)
    r = _forward(d, 0.0)
    return float(r[d.shape[0], d.shape[1]])


def alignment_matrix(a, b, gamma: float) -> np.ndarray:
    """Expected alignment ``E[i, j]`` under the soft-DTW Gibbs distribution over paths."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    d = pairwise_sq_dist(a, b)
    return _backward(d, _forward(d, gamma), gamma)


def soft_dtw_value_and_grad(a, b, gamma: float) -> tuple[float, np.ndarray]:
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    a = as_cloud(a)
    b = as_cloud(b)
    d = pairwise_sq_dist(a, b)
    r = _forward(d, gamma)
    e = _backward(d, r, gamma)
    # d_ij = |a_i - b_j|^2  =>  dL/da_i = sum_j E_ij * 2 (a_i - b_j)
    grad = 2.0 * (e.sum(axis=1)[:, None] * a - e @ b)
    return float(r[len(a), len(b)]), grad


def soft_dtw_grad(a, b, gamma: float) -> np.ndarray:
    return soft_dtw_value_and_grad(a, b, gamma)[1]


def smoothness(field: np.ndarray) -> float:
    """Sum of squared differences between consecutive displacement vectors."""
    diff = np.diff(field, axis=0)
    return float(np.sum(diff * diff))


def smoothness_grad(field: np.ndarray) -> np.ndarray:
    g = np.zeros_like(field)
    diff = np.diff(field, axis=0)
    g[1:] += 2.0 * diff
    g[:-1] -= 2.0 * diff
    return g


def objective(source, target, field, params: SoftDtwParams) -> tuple[float, np.ndarray]:
    value, grad = soft_dtw_value_and_grad(source + field, target, params.gamma)
    if params.smoothness_weight:
        value += params.smoothness_weight * smoothness(field)
        grad = grad + params.smoothness_weight * smoothness_grad(field)
    return value, grad


def optimize_field(source, target, params: SoftDtwParams | None = None, init=None) -> AlignmentResult:
    """Gradient descent on the displacement of every source point.

    Minimizes ``softdtw(source + D, target) + w * sum |D[k+1] - D[k]|^2``
    with a fixed step (optionally heavy-ball momentum). Stops early once the
    largest gradient component falls below ``params.tol``.

    Raises
    ------
    FloatingPointError
        If the objective becomes non-finite, which in practice means the
        step size is too large for the scale of the data.
    """
    params = params or SoftDtwParams()
    source = as_cloud(source)
    target = as_cloud(target)
    disp = np.zeros_like(source) if init is None else np.array(init, dtype=np.float64)
    if disp.shape != source.shape:
        raise ValueError("initial field must match the source shape")
    velocity = np.zeros_like(disp)

    loss, grad = objective(source, target, disp, params)
    history = [loss]
    done = 0
    for it in range(params.iterations):
        if np.max(np.abs(grad)) <= params.tol:
            break
        velocity = params.momentum * velocity - params.step_size * grad
        disp = disp + velocity
        loss, grad = objective(source, target, disp, params)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise FloatingPointError(
                f"non-finite loss at iteration {it + 1} (step_size={params.step_size}); "
                "reduce the step or normalize the input")
        history.append(loss)
        done = it + 1
    logger.debug("soft-DTW descent: %d iterations, loss %.6g -> %.6g", done, history[0], loss)
    return AlignmentResult(loss=loss, field=disp, loss_history=history, iterations=done)


def field_from_concatenated(stacked, params: SoftDtwParams | None = None) -> AlignmentResult:
    """Field for a ``(2n, 3)`` stack of systolic rows followed by diastolic rows."""
    stacked = as_cloud(stacked)
    if len(stacked) % 2:
        raise ValueError("concatenated input must have an even number of rows")
    half = len(stacked) // 2
    return optimize_field(stacked[:half], stacked[half:], params)
