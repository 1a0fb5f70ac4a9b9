"""Cost functions, Adam and the SB / FB / incremental training regimes.

``cost`` and ``cost_gradient`` are straightforward numpy implementations built
on ``nf_eval`` / ``nf_weight_grads``. ``train`` runs the compiled loops in
``_kernel``, which are checked against them in the test suite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernel
from .ffnn import ConstantInit, InitMode, network_eval, network_gradients
from .neural_form import MTSM, TSM, NeuralFormSpec, WeightMatrix, nf_eval, nf_weight_grads
from .problems import IvpSystem

__all__ = [
    "ConfigError",
    "TrainingDiverged",
    "TrainingConfig",
    "AdamState",
    "CostReport",
    "TrainResult",
    "cost",
    "cost_gradient",
    "adam_step",
    "train",
    "train_incremental",
    "stage_budget",
    "check_grid",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Inconsistent or invalid configuration, detected before any training."""


class TrainingDiverged(RuntimeError):
    """Non-finite cost or gradient; ``epoch`` is the offending epoch index."""

    def __init__(self, epoch: int, result: Optional["TrainResult"] = None, where: str = ""):
        self.epoch = epoch
        self.result = result
        super().__init__(f"training diverged at epoch {epoch}{where}")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 1000
    batch_mode: str = "FB"
    incremental: bool = False
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init: InitMode = field(default_factory=ConstantInit)
    adam_reset_per_stage: bool = False
    penalise_invariants: bool = False

    def __post_init__(self):
        if not isinstance(self.epochs, (int, np.integer)) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs!r}")
        if self.batch_mode not in ("SB", "FB"):
            raise ConfigError(f"batch_mode must be SB or FB, got {self.batch_mode!r}")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not self.epsilon > 0.0 or not self.alpha > 0.0:
            raise ConfigError("Adam alpha and epsilon must be positive")


@dataclass
class AdamState:
    m1: np.ndarray
    m2: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.m1.copy(), self.m2.copy(), self.t)


@dataclass(frozen=True)
class CostReport:
    value: float
    residual_part: float
    ic_part: float = 0.0
    invariant_part: float = 0.0


@dataclass
class TrainResult:
    weights: list[WeightMatrix]
    loss_trace: np.ndarray
    error_trace: Optional[np.ndarray]
    final_cost: float
    adam: AdamState


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("grid must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be finite and strictly increasing")
    return grid


def _check_components(problem: IvpSystem, specs, Ps):
    if len(specs) != problem.dim or len(Ps) != problem.dim:
        raise ConfigError(
            f"problem has {problem.dim} components but got {len(specs)} specs and {len(Ps)} weight matrices")
    for spec, P in zip(specs, Ps):
        if spec.m != P.m:
            raise ConfigError(f"spec order m={spec.m} but weight matrix has {P.m} networks")


def _use_invariants(problem: IvpSystem, penalise: bool) -> bool:
    return penalise and problem.n_invariants > 0


def cost(problem: IvpSystem, specs: Sequence[NeuralFormSpec], Ps: Sequence[WeightMatrix],
         grid, penalise_invariants: bool = False) -> CostReport:
    _check_components(problem, specs, Ps)
    grid = check_grid(grid)
    inv_fn = problem.invariants_fn if _use_invariants(problem, penalise_invariants) else None
    targets = problem.invariant_targets()
    residual_part = invariant_part = ic_part = 0.0
    for t in grid:
        vd = [nf_eval(spec, P, t) for spec, P in zip(specs, Ps)]
        u = np.array([v for v, _ in vd])
        du = np.array([dv for _, dv in vd])
        residual_part += 0.5 * float(np.sum(problem.residual(t, u, du) ** 2))
        if inv_fn is not None:
            invariant_part += 0.5 * float(np.sum((inv_fn(u) - targets) ** 2))
    for spec, P in zip(specs, Ps):
        if spec.variant == MTSM:
            n1, _ = network_eval(P.networks[0], 0.0)
            ic_part += 0.5 * (n1 - spec.u0) ** 2
    return CostReport(residual_part + ic_part + invariant_part, residual_part, ic_part, invariant_part)


def cost_gradient(problem: IvpSystem, specs: Sequence[NeuralFormSpec], Ps: Sequence[WeightMatrix],
                  grid, penalise_invariants: bool = False) -> np.ndarray:
    """Gradient of ``cost(...).value``, flattened component-major then network-major."""
    _check_components(problem, specs, Ps)
    grid = check_grid(grid)
    use_inv = _use_invariants(problem, penalise_invariants)
    targets = problem.invariant_targets()
    grads = [np.zeros_like(P.data) for P in Ps]
    for t in grid:
        vals, dvals, gvs, gdvs = [], [], [], []
        for spec, P in zip(specs, Ps):
            v, dv = nf_eval(spec, P, t)
            gv, gdv = nf_weight_grads(spec, P, t)
            vals.append(v)
            dvals.append(dv)
            gvs.append(gv)
            gdvs.append(gdv)
        u, du = np.array(vals), np.array(dvals)
        r = problem.residual(t, u, du)
        ju, jdu = problem.jacobian(t, u, du)
        coef_val = r @ ju
        coef_dval = r @ jdu
        if use_inv:
            coef_val = coef_val + (problem.invariants_fn(u) - targets) @ problem.invariants_jacobian(u)
        for c in range(problem.dim):
            for k in range(Ps[c].m):
                grads[c][k] += coef_val[c] * gvs[c][k].flat() + coef_dval[c] * gdvs[c][k].flat()
    for c, (spec, P) in enumerate(zip(specs, Ps)):
        if spec.variant == MTSM:
            first = P.networks[0]
            n1, _ = network_eval(first, 0.0)
            gn, _ = network_gradients(first, 0.0)
            grads[c][0] += (n1 - spec.u0) * gn.flat()
    return np.concatenate([g.ravel() for g in grads])


def adam_step(state: AdamState, weights: np.ndarray, grad: np.ndarray,
              cfg: TrainingConfig) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns new state and weights."""
    grad = np.asarray(grad, dtype=np.float64)
    if weights.shape != grad.shape or state.m1.shape != grad.shape:
        raise ConfigError("weights, gradient and Adam moments must have equal shapes")
    if not np.all(np.isfinite(grad)):
        raise TrainingDiverged(state.t, where=" (non-finite gradient passed to Adam)")
    new = state.copy()
    w = np.array(weights, dtype=np.float64)
    step = np.array([new.t], dtype=np.int64)
    _kernel.adam_update(w, grad, new.m1, new.m2, step, cfg.alpha, cfg.beta1, cfg.beta2, cfg.epsilon)
    new.t = int(step[0])
    return new, w


def stage_budget(epochs: int, stages: int) -> list[int]:
    """Equal split of the epoch budget; the remainder goes to the last stage."""
    base = epochs // stages
    budget = [base] * stages
    budget[-1] += epochs - base * stages
    return budget


class _Packed:
    """Flat weight vector plus everything the compiled loop needs."""

    def __init__(self, problem: IvpSystem, specs, Ps, cfg: TrainingConfig):
        _check_components(problem, specs, Ps)
        variants = {s.variant for s in specs}
        orders = {s.m for s in specs}
        hidden = {P.H for P in Ps}
        anchors_t = {s.t0 for s in specs}
        if len(variants) > 1 or len(orders) > 1 or len(hidden) > 1 or len(anchors_t) > 1:
            raise ConfigError("all components must share variant, order, hidden width and anchor time")
        self.problem = problem
        self.specs = list(specs)
        self.d = problem.dim
        self.m = orders.pop()
        self.H = hidden.pop()
        self.tsm = variants.pop() == TSM
        self.t0 = anchors_t.pop()
        self.anchors = np.array([s.u0 for s in specs], dtype=np.float64)
        self.W = np.concatenate([P.data.ravel() for P in Ps])
        self.penalise = _use_invariants(problem, cfg.penalise_invariants)
        self.targets = problem.invariant_targets() if problem.n_invariants else np.zeros(1)

    def unpack(self) -> list[WeightMatrix]:
        per = self.m * (3 * self.H + 1)
        return [WeightMatrix(self.W[c * per:(c + 1) * per].reshape(self.m, -1).copy())
                for c in range(self.d)]

    def cost(self, grid) -> float:
        g = np.zeros_like(self.W)
        parts = np.zeros(3)
        p = self.problem
        return _kernel.cost_and_gradient(
            self.W, self.d, self.m, self.H, self.tsm, self.t0, self.anchors, grid, 0,
            p.params, p.residual_kernel, p.jacobian_kernel, p.invariants_kernel,
            p.invariants_jac_kernel, p.n_invariants, self.targets, self.penalise, g, parts)

    def run(self, grid, n_active, epochs, single_batch, state: AdamState, cfg, ref,
            trace, err_trace, offset) -> int:
        p = self.problem
        step = np.array([state.t], dtype=np.int64)
        failed = _kernel.train_loop(
            self.W, self.d, self.m, self.H, self.tsm, self.t0, self.anchors, grid, n_active,
            epochs, single_batch, p.params, p.residual_kernel, p.jacobian_kernel,
            p.invariants_kernel, p.invariants_jac_kernel, p.n_invariants, self.targets,
            self.penalise, state.m1, state.m2, step, cfg.alpha, cfg.beta1, cfg.beta2,
            cfg.epsilon, ref, ref is not None and ref.size > 0, trace, err_trace, offset)
        state.t = int(step[0])
        return failed


def _reference(reference, n: int, d: int):
    if reference is None:
        return np.zeros((0, d)), False
    ref = np.asarray(reference, dtype=np.float64).reshape(n, d)
    return ref, True


def _finish(packed: _Packed, grid, trace, err_trace, state, record) -> TrainResult:
    return TrainResult(packed.unpack(), trace, err_trace if record else None,
                       float(packed.cost(grid)), state)


def train(problem: IvpSystem, specs: Sequence[NeuralFormSpec], Ps: Sequence[WeightMatrix], grid,
          cfg: TrainingConfig, reference=None, state: Optional[AdamState] = None) -> TrainResult:
    """Train the neural forms on ``grid`` with Adam.

    SB: one update per grid point, points in ascending order. FB: one update
    per epoch with the gradient averaged over the grid. With
    ``cfg.incremental`` the call is forwarded to ``train_incremental``.

    ``reference`` (optional, shape ``(len(grid), dim)``) enables the per-epoch
    mean-absolute-error trace. The input weight matrices are not modified.
    """
    if cfg.incremental:
        return train_incremental(problem, specs, Ps, grid, cfg, reference, state)
    grid = check_grid(grid)
    packed = _Packed(problem, specs, Ps, cfg)
    state = state.copy() if state is not None else AdamState.zeros(packed.W.size)
    ref, record = _reference(reference, grid.size, problem.dim)
    trace = np.zeros(cfg.epochs)
    err_trace = np.zeros(cfg.epochs if record else 0)
    failed = packed.run(grid, grid.size, cfg.epochs, cfg.batch_mode == "SB", state, cfg, ref,
                        trace, err_trace, 0)
    if failed >= 0:
        partial = TrainResult(packed.unpack(), trace[:failed + 1],
                              err_trace[:failed + 1] if record else None, float("nan"), state)
        raise TrainingDiverged(failed, partial)
    return _finish(packed, grid, trace, err_trace, state, record)


def train_incremental(problem: IvpSystem, specs: Sequence[NeuralFormSpec], Ps: Sequence[WeightMatrix],
                      grid, cfg: TrainingConfig, reference=None,
                      state: Optional[AdamState] = None) -> TrainResult:
    """FB training on growing prefixes of ``grid``: 1 point, 2 points, ..., all points."""
    if not cfg.incremental:
        raise ConfigError("train_incremental requires cfg.incremental = True")
    grid = check_grid(grid)
    packed = _Packed(problem, specs, Ps, cfg)
    state = state.copy() if state is not None else AdamState.zeros(packed.W.size)
    ref, record = _reference(reference, grid.size, problem.dim)
    trace = np.zeros(cfg.epochs)
    err_trace = np.zeros(cfg.epochs if record else 0)
    offset = 0
    for stage, epochs in enumerate(stage_budget(cfg.epochs, grid.size), start=1):
        if cfg.adam_reset_per_stage:
            state = AdamState.zeros(packed.W.size)
        failed = packed.run(grid, stage, epochs, False, state, cfg, ref, trace, err_trace, offset)
        if failed >= 0:
            end = offset + failed + 1
            partial = TrainResult(packed.unpack(), trace[:end], err_trace[:end] if record else None,
                                  float("nan"), state)
            raise TrainingDiverged(offset + failed, partial, where=f" (incremental stage {stage})")
        offset += epochs
    return _finish(packed, grid, trace, err_trace, state, record)


def default_specs(problem: IvpSystem, variant: str, m: int, t0: Optional[float] = None,
                  anchors=None) -> list[NeuralFormSpec]:
    t0 = problem.t0 if t0 is None else t0
    anchors = problem.u0 if anchors is None else anchors
    return [NeuralFormSpec(variant, m, float(t0), float(a)) for a in anchors]


def initial_weights(problem: IvpSystem, m: int, hidden: int, init: InitMode) -> list[WeightMatrix]:
    """Identical starting weights for every component."""
    P = WeightMatrix.initial(init, m, hidden)
    return [P.copy() for _ in range(problem.dim)]


__all__ += ["default_specs", "initial_weights"]
