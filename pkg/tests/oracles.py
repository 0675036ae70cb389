"""Independent oracles used by the test suite.

These deliberately avoid the package's solution paths: the expectile
oracle evaluates the asymmetric quadratic objective on a dense grid, the
pareto oracle is a naive double loop, and the projection oracles grid-walk
the feasible set.
"""

import numpy as np


def asymmetric_objective(losses, r, tau):
    """E[w_tau(L - r) (L - r)^2] on the empirical distribution."""
    z = np.asarray(losses, dtype=float) - r
    w = np.where(z > 0, tau, 1.0 - tau)
    return float(np.mean(w * z * z))


def grid_expectile(losses, tau, step=1e-4):
    """Argmin of the asymmetric quadratic over a dense grid [min, max].

    The objective is evaluated exactly on every grid point via prefix
    sums, so this stays affordable at n = 1e5 while remaining a direct
    minimization, independent of the fixed-point iteration.
    """
    L = np.sort(np.asarray(losses, dtype=float).ravel())
    n = L.size
    lo, hi = float(L[0]), float(L[-1])
    if hi == lo:
        return lo
    grid = np.arange(lo, hi + step, step)
    c1 = np.concatenate([[0.0], np.cumsum(L)])
    c2 = np.concatenate([[0.0], np.cumsum(L * L)])
    k = np.searchsorted(L, grid, side="right")   # |{L <= r}|, w_tau(0)=1-tau
    s1_below, s2_below = c1[k], c2[k]
    s1_above, s2_above = c1[n] - c1[k], c2[n] - c2[k]
    below = (1.0 - tau) * (s2_below - 2.0 * grid * s1_below
                           + grid * grid * k)
    above = tau * (s2_above - 2.0 * grid * s1_above
                   + grid * grid * (n - k))
    objective = (below + above) / n
    return float(grid[np.argmin(objective)])


def naive_pareto(values):
    """Indices of non-dominated points under componentwise <=."""
    survivors = []
    for i, vi in enumerate(values):
        dominated = False
        for j, vj in enumerate(values):
            if j == i:
                continue
            if all(a <= b for a, b in zip(vj, vi)) and tuple(vj) != tuple(vi):
                dominated = True
                break
        if not dominated:
            survivors.append(i)
    return survivors


def grid_project_box_ball(point, lo, hi, radius, steps=401):
    """Brute-force nearest feasible point on a 2-d grid (oracle for the
    Dykstra projection)."""
    xs = np.linspace(lo[0], hi[0], steps)
    ys = np.linspace(lo[1], hi[1], steps)
    best, best_d = None, np.inf
    for x in xs:
        for y in ys:
            if x * x + y * y > radius * radius:
                continue
            d = (x - point[0]) ** 2 + (y - point[1]) ** 2
            if d < best_d:
                best, best_d = np.array([x, y]), d
    return best


def grid_best_response_on_ray(target, radius, steps=100001):
    """Argmin of ||theta - target||^2 along the ray toward target inside a
    centered ball (KKT oracle for the binding-budget best response)."""
    direction = target / np.linalg.norm(target)
    ts = np.linspace(0.0, radius, steps)
    costs = [(float(np.sum((t * direction - target) ** 2)), t) for t in ts]
    _, t_best = min(costs)
    return t_best * direction
