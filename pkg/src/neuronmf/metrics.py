"""Distances between samples, laws and densities, plus log-log rate fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def w1_samples(u, v) -> float:
    """W1 between two equal-length empirical measures.

    In one dimension the optimal coupling matches order statistics, so the
    distance is the mean absolute difference of the sorted samples.
    """
    u = np.sort(np.asarray(u, dtype=float))
    v = np.sort(np.asarray(v, dtype=float))
    if u.size != v.size or u.size == 0:
        raise ValueError("need equal, nonzero sample sizes")
    return float(np.mean(np.abs(u - v)))


def w1_samples_vs_law(samples, law) -> float:
    """W1 between an empirical measure and a law with piecewise-linear cdf.

    Computes int |F_n - F| dx exactly on the merged breakpoints of the
    empirical cdf (steps at the sorted samples) and the law's cdf grid,
    splitting cells where the linear cdf crosses the empirical level.

    law is either an (xs, F) pair or an object with a cdf_grid() method;
    F must increase from 0 to 1.
    """
    xs, F = law if isinstance(law, tuple) else law.cdf_grid()
    xs = np.asarray(xs, dtype=float)
    F = np.asarray(F, dtype=float)
    if abs(F[-1] - 1.0) > 1e-9 or F[0] < -1e-12 or np.any(np.diff(F) < -1e-12):
        raise ValueError("law cdf must increase from 0 to 1")
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n == 0:
        raise ValueError("need at least one sample")

    # merged breakpoints over the union of both supports
    grid = np.union1d(xs, s)
    lo = min(xs[0], s[0])
    hi = max(xs[-1], s[-1])
    grid = grid[(grid >= lo) & (grid <= hi)]
    f_law = np.interp(grid, xs, F, left=0.0, right=1.0)
    f_emp = np.searchsorted(s, grid, side="right") / n

    # d = F - F_n is linear on each cell except at empirical steps, which
    # sit exactly on breakpoints; integrate |linear| per cell analytically
    d_left = (f_law - f_emp)[:-1]
    # just before the right endpoint the empirical cdf still has its left value
    f_emp_right = np.searchsorted(s, grid[1:], side="left") / n
    d_right = np.interp(grid[1:], xs, F, left=0.0, right=1.0) - f_emp_right
    h = np.diff(grid)
    same = d_left * d_right >= 0
    area = np.where(
        same,
        0.5 * (np.abs(d_left) + np.abs(d_right)) * h,
        0.5 * (d_left**2 + d_right**2) / np.maximum(np.abs(d_right - d_left), 1e-300) * h,
    )
    return float(np.sum(area))


def tv_densities(d1, d2, grid) -> float:
    """Total variation distance, half the L1 distance between densities."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if d1.shape != grid.shape or d2.shape != grid.shape:
        raise ValueError("densities and grid must share a shape")
    return 0.5 * float(np.trapezoid(np.abs(d1 - d2), grid))


def h_distance(x: float, y: float, rate) -> float:
    """|H(x) - H(y)| with H = f + arctan, the coupling metric."""
    if x < 0 or y < 0:
        raise ValueError("potentials are nonnegative")
    hx = float(rate(x)) + np.arctan(x)
    hy = float(rate(y)) + np.arctan(y)
    return abs(hx - hy)


@dataclass
class RateFit:
    points: list  # (log N, log value)
    slope: float
    intercept: float
    r_squared: float


def fit_rate(points) -> RateFit:
    """Least-squares slope of log(value) against log(N).

    points are (N, value) pairs with positive values; at least 3 needed.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    if any(v <= 0 or n <= 0 for n, v in pts):
        raise ValueError("rate fit needs positive sizes and values")
    ln = np.log([n for n, _ in pts])
    lv = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(ln, lv, 1)
    pred = slope * ln + intercept
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(points=list(zip(ln.tolist(), lv.tolist())), slope=float(slope), intercept=float(intercept), r_squared=r2)
