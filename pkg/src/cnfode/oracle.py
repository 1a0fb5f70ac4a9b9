"""Reference solutions and error metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problems import IvpSystem
from .training import ConfigError

__all__ = ["ErrorReport", "rk4_solve", "delta_u", "delta_u_fragmented", "analytic_on", "convergence_order"]


def rk4_solve(problem: IvpSystem, grid, substeps: int = 1, u0=None) -> np.ndarray:
    """Classic RK4 with ``substeps`` equal steps per grid interval; returns ``(len(grid), dim)``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ConfigError("RK4 grid must be non-empty and strictly increasing")
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")
    f = problem.rhs
    u = problem.u0_array if u0 is None else np.array(u0, dtype=np.float64)
    out = np.empty((grid.size, problem.dim))
    out[0] = u
    for i in range(grid.size - 1):
        t = grid[i]
        h = (grid[i + 1] - grid[i]) / substeps
        for _ in range(substeps):
            k1 = f(t, u)
            k2 = f(t + 0.5 * h, u + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, u + 0.5 * h * k2)
            k4 = f(t + h, u + h * k3)
            u = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t + h
        out[i + 1] = u
    return out


def convergence_order(problem: IvpSystem, t_end: float, intervals: int) -> float:
    """log2 of the end-point error ratio when the RK4 step is halved."""
    exact = problem.analytic(t_end)
    coarse = rk4_solve(problem, np.linspace(problem.t0, t_end, intervals + 1))[-1]
    fine = rk4_solve(problem, np.linspace(problem.t0, t_end, 2 * intervals + 1))[-1]
    return float(np.log2(np.max(np.abs(coarse - exact)) / np.max(np.abs(fine - exact))))


def delta_u(exact, approx) -> float:
    """Mean absolute deviation over the grid (l1 over components for systems)."""
    exact = np.asarray(exact, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if exact.shape != approx.shape:
        raise ValueError(f"shape mismatch: {exact.shape} vs {approx.shape}")
    diff = np.abs(exact - approx)
    if diff.ndim > 1:
        diff = diff.sum(axis=tuple(range(1, diff.ndim)))
    return float(np.mean(diff))


def analytic_on(fn: Callable[[float], np.ndarray], times) -> np.ndarray:
    return np.array([np.atleast_1d(fn(float(t))) for t in np.atleast_1d(times)])


@dataclass(frozen=True, eq=False)
class ErrorReport:
    delta_u: float
    delta_u_l: np.ndarray
    interface_linf: float
    interface_prev: float
    interface_next: float
    pointwise: np.ndarray


def delta_u_fragmented(sol, exact: Callable[[float], np.ndarray]) -> ErrorReport:
    """Per-subdomain and averaged errors plus the interface l-infinity mismatch.

    Each subdomain averages over its own ``n + 1`` points, so interface points
    count in both neighbours. ``interface_prev`` is the worst error at
    ``t_{n,l-1}`` using subdomain ``l-1``; ``interface_next`` the worst at the
    same time using subdomain ``l``.
    """
    frag = sol.frag
    h = sol.solved
    if h == 0:
        raise ValueError("no solved subdomains")
    pointwise = np.empty((h, frag.n + 1))
    delta_l = np.empty(h)
    ends = np.empty((h, sol.dim))
    starts = np.empty((h, sol.dim))
    exact_edges = analytic_on(exact, frag.edges[:h + 1])
    for l in range(h):
        grid = frag.grids[l]
        vals, _ = sol.eval_in(l, grid)
        err = np.abs(analytic_on(exact, grid) - vals).sum(axis=1)
        pointwise[l] = err
        delta_l[l] = err.mean()
        starts[l] = vals[0]
        ends[l] = vals[-1]
    prev = nxt = 0.0
    if h > 1:
        prev = float(np.max(np.abs(ends[:-1] - exact_edges[1:h]).sum(axis=1)))
        nxt = float(np.max(np.abs(starts[1:] - exact_edges[1:h]).sum(axis=1)))
    return ErrorReport(float(delta_l.mean()), delta_l, max(prev, nxt), prev, nxt, pointwise.ravel())
