"""
solvers.py

Small scalar/grid search routines used by the width solvers in bounds.py.

golden_section(f, lo, hi)        - golden-section minimum on [lo, hi], endpoints checked
bracket_golden(f, lo, hi)        - coarse grid scan to bracket the minimum, then golden-section
refine_grid_1d(f, xr)            - the same for scalar objectives
refine_grid_2d(f, xr, yr)        - repeated log-grid refinement for 2-D objectives (vectorized f)
smallest_feasible(pred, lo)      - smallest x >= lo with pred(x) true, pred monotone
"""

import math

import numpy as np
from scipy.optimize import bisect

PHI_RATIO = 2 / (1 + math.sqrt(5))
GOLDEN_TOL = 1e-10


def golden_section(f, lo, hi, tol=GOLDEN_TOL, max_iterations=500):
    """Return (argmin, minimum) of a unimodal f on [lo, hi]."""
    x1 = hi - PHI_RATIO * (hi - lo)
    x2 = lo + PHI_RATIO * (hi - lo)
    f1, f2 = f(x1), f(x2)
    f_lo, f_hi = f(lo), f(hi)
    lo0, hi0 = lo, hi
    iteration = 0
    while iteration < max_iterations and abs(hi - lo) > tol:
        if f2 > f1:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - PHI_RATIO * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + PHI_RATIO * (hi - lo)
            f2 = f(x2)
        iteration += 1

    x_mid = 0.5 * (lo + hi)
    f_mid = f(x_mid)
    # monotone objectives end up at an edge
    best = min((f_mid, x_mid), (f_lo, lo0), (f_hi, hi0))
    return best[1], best[0]


def bracket_golden(f, lo, hi, points=64, tol=GOLDEN_TOL):
    """Scan `points` evenly spaced values, then golden-section around the best one."""
    grid = np.linspace(lo, hi, points)
    values = [f(x) for x in grid]
    best = int(np.nanargmin(values))
    left = grid[max(best - 1, 0)]
    right = grid[min(best + 1, points - 1)]
    x, fx = golden_section(f, left, right, tol=tol)
    if values[best] < fx:
        return float(grid[best]), float(values[best])
    return float(x), float(fx)


def refine_grid_1d(f, x_range, rounds=3, points=64):
    """Minimize scalar f over a log-spaced grid, zooming in on the best point. Returns (x_star, value)."""
    lo, hi = math.log(x_range[0]), math.log(x_range[1])
    best = (math.nan, math.inf)
    for _ in range(rounds):
        grid = np.linspace(lo, hi, points)
        values = np.array([f(math.exp(g)) for g in grid], dtype=np.float64)
        values = np.where(np.isnan(values), np.inf, values)
        i = int(np.argmin(values))
        if values[i] < best[1]:
            best = (math.exp(grid[i]), float(values[i]))
        step = grid[1] - grid[0]
        lo = max(grid[i] - 2 * step, math.log(x_range[0]))
        hi = min(grid[i] + 2 * step, math.log(x_range[1]))
    return best


def refine_grid_2d(f, x_range, y_range, rounds=3, points=64):
    """
    Minimize f(x, y) over log-spaced grids, zooming in around the best cell each round.

    `f` must accept broadcast numpy arrays. Ranges are (low, high) with low > 0.
    Returns (x_star, y_star, value).
    """
    lx = [math.log(x_range[0]), math.log(x_range[1])]
    ly = [math.log(y_range[0]), math.log(y_range[1])]
    best = (math.nan, math.nan, math.inf)
    for _ in range(rounds):
        gx = np.linspace(lx[0], lx[1], points)
        gy = np.linspace(ly[0], ly[1], points)
        with np.errstate(all="ignore"):
            values = f(np.exp(gx)[:, None], np.exp(gy)[None, :])
        values = np.where(np.isnan(values), np.inf, values)
        ix, iy = np.unravel_index(np.argmin(values), values.shape)
        if values[ix, iy] < best[2]:
            best = (float(np.exp(gx[ix])), float(np.exp(gy[iy])), float(values[ix, iy]))
        step_x, step_y = gx[1] - gx[0], gy[1] - gy[0]
        lx = [max(gx[ix] - 2 * step_x, math.log(x_range[0])), min(gx[ix] + 2 * step_x, math.log(x_range[1]))]
        ly = [max(gy[iy] - 2 * step_y, math.log(y_range[0])), min(gy[iy] + 2 * step_y, math.log(y_range[1]))]
    return best


def smallest_feasible(pred, lo, rel_tol=1e-12, limit=1e12):
    """Smallest x >= lo with pred(x), assuming pred is monotone; None if x would exceed limit."""
    if pred(lo):
        return lo
    step = max(abs(lo), 1e-6)
    hi = lo + step
    while not pred(hi):
        step *= 2.0
        hi = lo + step
        if hi > limit:
            return None
    xtol = rel_tol * 1e-12
    x = bisect(lambda u: 1.0 if pred(u) else -1.0, lo, hi, xtol=xtol, rtol=rel_tol)
    if pred(x):
        return x
    # bisect may stop just short of the boundary
    return min(hi, x + 2.0 * (xtol + rel_tol * abs(x)))
