"""Domain fragmentation: sequential subdomain solves with initial-value handoff."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernel
from .ffnn import ConstantInit, UniformInit
from .neural_form import TSM, VARIANTS, NeuralFormSpec, WeightMatrix
from .problems import IvpSystem
from .training import ConfigError, TrainingConfig, TrainingDiverged, train

__all__ = [
    "Fragmentation",
    "FragmentedSolution",
    "make_fragmentation",
    "fragmentation_from_edges",
    "solve_scnf",
    "solve_scnf_system",
    "evaluate",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Fragmentation:
    """``h`` uniform subdomains of ``n + 1`` points; neighbours share their interface point."""

    t0: float
    t_end: float
    h: int
    n: int
    edges: np.ndarray
    grids: np.ndarray

    def subdomain_grid(self, l: int) -> np.ndarray:
        return self.grids[l]

    def unique_points(self) -> np.ndarray:
        return np.concatenate([self.grids[0], *[g[1:] for g in self.grids[1:]]])


def make_fragmentation(t0: float, t_end: float, h: int, n: int) -> Fragmentation:
    if not (np.isfinite(t0) and np.isfinite(t_end)) or t_end <= t0:
        raise ConfigError(f"empty or invalid domain [{t0}, {t_end}]")
    if int(h) != h or h < 1 or int(n) != n or n < 1:
        raise ConfigError("need h >= 1 subdomains and n >= 1 intervals per subdomain")
    h = int(h)
    edges = t0 + (t_end - t0) * np.arange(h + 1) / h
    edges[0], edges[-1] = t0, t_end
    return fragmentation_from_edges(edges, int(n))


def fragmentation_from_edges(edges: np.ndarray, n: int) -> Fragmentation:
    """Rebuild the uniform subdomain grids from stored edges; endpoints are copied exactly."""
    edges = np.array(edges, dtype=np.float64)
    h = edges.size - 1
    grids = np.empty((h, n + 1))
    for l in range(h):
        a, b = edges[l], edges[l + 1]
        grids[l] = a + (b - a) * np.arange(n + 1) / n
        grids[l, 0], grids[l, -1] = a, b
    edges.setflags(write=False)
    grids.setflags(write=False)
    return Fragmentation(float(edges[0]), float(edges[-1]), h, n, edges, grids)


@dataclass(eq=False)
class FragmentedSolution:
    """Trained weights per subdomain plus the handoff values that chain them.

    ``weights`` has shape ``(h, dim, m, 3H+1)``. The anchor values of
    subdomain ``l > 0`` are ``handoffs[l - 1]``; only ``u0`` and the handoffs
    are stored.
    """

    frag: Fragmentation
    variant: str
    m: int
    H: int
    u0: np.ndarray
    weights: np.ndarray
    handoffs: np.ndarray
    final_costs: np.ndarray
    loss_traces: list = field(default_factory=list)
    error_traces: list = field(default_factory=list)
    failed_at: Optional[int] = None
    problem_name: str = ""

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def anchors(self) -> np.ndarray:
        return np.vstack([self.u0[None, :], self.handoffs[:-1]])

    @property
    def solved(self) -> int:
        """Number of subdomains with usable weights."""
        return self.frag.h if self.failed_at is None else self.failed_at

    def specs(self, l: int) -> list[NeuralFormSpec]:
        t0 = float(self.frag.edges[l])
        return [NeuralFormSpec(self.variant, self.m, t0, float(a)) for a in self.anchors[l]]

    def weight_matrices(self, l: int) -> list[WeightMatrix]:
        return [WeightMatrix(self.weights[l, c].copy()) for c in range(self.dim)]

    def locate(self, t: float) -> int:
        """Subdomain owning ``t``; an interface point belongs to the earlier subdomain."""
        if not self.frag.t0 <= t <= self.frag.t_end:
            raise ValueError(f"t={t} outside the solution domain [{self.frag.t0}, {self.frag.t_end}]")
        l = int(np.searchsorted(self.frag.edges, t, side="left")) - 1
        return min(max(l, 0), self.frag.h - 1)

    def eval_in(self, l: int, times) -> tuple[np.ndarray, np.ndarray]:
        """Value and time derivative of subdomain ``l``'s form at ``times`` (shape ``(N, dim)``)."""
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        val = np.empty((times.size, self.dim))
        dval = np.empty((times.size, self.dim))
        _kernel.evaluate_forms(self.weights[l].ravel().copy(), self.dim, self.m, self.H,
                               self.variant == TSM, float(self.frag.edges[l]),
                               self.anchors[l].copy(), times, val, dval)
        return val, dval

    def evaluate(self, t: float) -> np.ndarray:
        l = self.locate(float(t))
        if l >= self.solved:
            raise ValueError(f"subdomain {l} was not solved (training failed at {self.failed_at})")
        return self.eval_in(l, [t])[0][0]

    def evaluate_many(self, times) -> np.ndarray:
        return np.array([self.evaluate(t) for t in np.atleast_1d(times)])


def evaluate(sol: FragmentedSolution, t: float) -> np.ndarray:
    return sol.evaluate(t)


def _subdomain_init(cfg: TrainingConfig, l: int, independent: bool):
    if independent and isinstance(cfg.init, UniformInit):
        return UniformInit(cfg.init.lo, cfg.init.hi, (cfg.init.seed + (l << 32)) % 2 ** 64)
    return cfg.init


def solve_scnf(problem: IvpSystem, variant: str, m: int, H: int, cfg: TrainingConfig,
               frag: Fragmentation, independent_init: bool = False,
               record_error: bool = False) -> FragmentedSolution:
    """Solve subdomain after subdomain, each anchored at the previous handoff value.

    Every subdomain starts from the same initial weights unless
    ``independent_init`` (random init only). A diverging subdomain stops the
    sweep; the returned solution has ``failed_at`` set.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    if m < 1 or H < 1:
        raise ConfigError("m and H must be >= 1")
    if abs(frag.t0 - problem.t0) > 0.0 or frag.t_end > problem.domain_end + 1e-12:
        raise ConfigError("fragmentation must start at the problem's t0 and stay inside its domain")
    d = problem.dim
    u0 = problem.u0_array
    weights = np.zeros((frag.h, d, m, 3 * H + 1))
    handoffs = np.full((frag.h, d), np.nan)
    costs = np.full(frag.h, np.nan)
    sol = FragmentedSolution(frag, variant, m, H, u0, weights, handoffs, costs,
                             problem_name=problem.name)
    anchor = u0.copy()
    for l in range(frag.h):
        grid = frag.grids[l]
        t0 = float(grid[0])
        specs = [NeuralFormSpec(variant, m, t0, float(a)) for a in anchor]
        P = WeightMatrix.initial(_subdomain_init(cfg, l, independent_init), m, H)
        Ps = [P.copy() for _ in range(d)]
        ref = None
        if record_error and problem.analytic is not None:
            ref = np.array([problem.analytic(t) for t in grid])
        try:
            res = train(problem, specs, Ps, grid, cfg, reference=ref)
        except TrainingDiverged as exc:
            log.warning("subdomain %d diverged at epoch %d", l, exc.epoch)
            if exc.result is not None:
                weights[l] = np.stack([P.data for P in exc.result.weights])
                sol.loss_traces.append(exc.result.loss_trace)
            sol.failed_at = l
            return sol
        weights[l] = np.stack([P.data for P in res.weights])
        costs[l] = res.final_cost
        sol.loss_traces.append(res.loss_trace)
        if res.error_trace is not None:
            sol.error_traces.append(res.error_trace)
        handoff = sol.eval_in(l, [grid[-1]])[0][0]
        if not np.all(np.isfinite(handoff)):
            sol.failed_at = l
            return sol
        handoffs[l] = handoff
        anchor = handoffs[l]
    return sol


def solve_scnf_system(problem: IvpSystem, variant: str, m: int, H: int, cfg: TrainingConfig,
                      frag: Fragmentation, independent_init: bool = False) -> FragmentedSolution:
    """Coupled systems: one neural form per component, trained on the joint cost."""
    return solve_scnf(problem, variant, m, H, cfg, frag, independent_init)
