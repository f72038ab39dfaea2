"""Independent reference computations used to freeze expected values.

Nothing here imports the code under test.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq


def sq_dist_loop(a, b):
    out = np.zeros((len(a), len(b)))
    for i in range(len(a)):
        for j in range(len(b)):
            out[i, j] = sum((a[i][k] - b[j][k]) ** 2 for k in range(3))
    return out


def monotone_path_costs(cost):
    """Cost of every monotone path from (0, 0) to (n-1, m-1)."""
    n, m = cost.shape

    @lru_cache(maxsize=None)
    def walk(i, j):
        here = cost[i, j]
        if i == n - 1 and j == m - 1:
            return (here,)
        tails = []
        if i + 1 < n:
            tails += walk(i + 1, j)
        if j + 1 < m:
            tails += walk(i, j + 1)
        if i + 1 < n and j + 1 < m:
            tails += walk(i + 1, j + 1)
        return tuple(here + t for t in tails)

    return np.array(walk(0, 0))


def soft_dtw_enumerated(a, b, gamma):
    costs = monotone_path_costs(sq_dist_loop(a, b))
    lo = costs.min()
    return lo - gamma * math.log(np.sum(np.exp(-(costs - lo) / gamma)))


def hard_dtw_enumerated(a, b):
    return monotone_path_costs(sq_dist_loop(a, b)).min()


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def nearest_loop(q, cloud):
    best, best_d = 0, math.inf
    for i, p in enumerate(cloud):
        d = math.dist(q, p)
        if d < best_d:
            best, best_d = i, d
    return best, best_d


def chamfer_loop(a, b):
    ab = sum(min(math.dist(p, q) ** 2 for q in b) for p in a) / len(a)
    ba = sum(min(math.dist(p, q) ** 2 for q in a) for p in b) / len(b)
    return ab + ba


def hausdorff_loop(a, b):
    ab = max(min(math.dist(p, q) for q in b) for p in a)
    ba = max(min(math.dist(p, q) for q in a) for p in b)
    return max(ab, ba)


# --- parabola y = a u (1 - u) over x = u, u in [0, 1] -----------------------

def _primitive(w):
    return 0.5 * (w * math.sqrt(1 + w * w) + math.asinh(w))


def parabola_arc_length(a, u):
    """Closed-form arc length of (v, a v (1 - v)) for v in [0, u]."""
    if a == 0:
        return u
    return (_primitive(a) - _primitive(a * (1 - 2 * u))) / (2 * a)


def parabola_at_arc_fraction(a, fraction):
    """Point of the parabola whose arc length is ``fraction`` of the total."""
    total = parabola_arc_length(a, 1.0)
    if fraction <= 0:
        return np.zeros(3)
    if fraction >= 1:
        return np.array([1.0, 0.0, 0.0])
    u = brentq(lambda v: parabola_arc_length(a, v) - fraction * total, 0.0, 1.0, xtol=1e-15)
    return np.array([u, a * u * (1 - u), 0.0])
