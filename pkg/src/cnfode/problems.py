"""Initial value problems ``G(t, u, du) = 0`` and the three test problems.

Each problem carries numba-compiled callbacks so the training kernel can
evaluate residuals and their Jacobians without leaving compiled code.
Callback signatures (all write into the trailing ``out`` arrays)::

    residual(t, u, du, params, out)          out: (dim,)
    jacobian(t, u, du, params, ju, jdu)      ju, jdu: (dim, dim)
    rhs(t, u, params, out)                   explicit form du = f(t, u)
    invariants(u, params, out)               out: (n_invariants,)
    invariants_jac(u, params, out)           out: (n_invariants, dim)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numba as nb
import numpy as np

__all__ = [
    "IvpSystem",
    "dahlquist_problem",
    "oscillating_problem",
    "rigid_body_problem",
    "rigid_body_coefficients",
    "RIGID_BODY_MOMENTS",
    "RIGID_BODY_INITIAL_VALUES",
]

RIGID_BODY_MOMENTS = (2.0, 1.0, 2.0 / 3.0)

# the three initial conditions plotted for the free rigid body
RIGID_BODY_INITIAL_VALUES = (
    (math.cos(1.1), 0.6, math.sin(1.1)),
    (math.cos(1.0), 0.7, math.sin(1.0)),
    (math.cos(1.2), 0.5, math.sin(1.2)),
)


@nb.njit(cache=True)
def _no_invariants(u, params, out):
    pass


@nb.njit(cache=True)
def _no_invariants_jac(u, params, out):
    pass


@dataclass(frozen=True, eq=False)
class IvpSystem:
    """An initial value problem ``G(t, u, du) = 0, u(t0) = u0`` on ``[t0, domain_end]``."""

    name: str
    dim: int
    t0: float
    u0: tuple
    domain_end: float
    params: np.ndarray
    residual_kernel: Callable
    jacobian_kernel: Callable
    rhs_kernel: Callable
    invariants_kernel: Callable = _no_invariants
    invariants_jac_kernel: Callable = _no_invariants_jac
    n_invariants: int = 0
    analytic: Optional[Callable[[float], np.ndarray]] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if len(self.u0) != self.dim:
            raise ValueError(f"u0 has length {len(self.u0)}, expected {self.dim}")
        if not all(math.isfinite(v) for v in self.u0):
            raise ValueError("u0 must be finite")
        if not self.domain_end > self.t0:
            raise ValueError("domain_end must exceed t0")
        self.params.setflags(write=False)

    @property
    def u0_array(self) -> np.ndarray:
        return np.array(self.u0, dtype=np.float64)

    def residual(self, t, u, du) -> np.ndarray:
        out = np.empty(self.dim)
        self.residual_kernel(float(t), _vec(u), _vec(du), self.params, out)
        return out

    def jacobian(self, t, u, du) -> tuple[np.ndarray, np.ndarray]:
        """Partial derivatives of the residual w.r.t. ``u`` and ``du``."""
        ju = np.zeros((self.dim, self.dim))
        jdu = np.zeros((self.dim, self.dim))
        self.jacobian_kernel(float(t), _vec(u), _vec(du), self.params, ju, jdu)
        return ju, jdu

    def rhs(self, t, u) -> np.ndarray:
        out = np.empty(self.dim)
        self.rhs_kernel(float(t), _vec(u), self.params, out)
        return out

    @property
    def invariants_fn(self) -> Optional[Callable[[np.ndarray], np.ndarray]]:
        if self.n_invariants == 0:
            return None

        def fn(u):
            out = np.empty(self.n_invariants)
            self.invariants_kernel(_vec(u), self.params, out)
            return out

        return fn

    def invariants_jacobian(self, u) -> np.ndarray:
        out = np.zeros((self.n_invariants, self.dim))
        self.invariants_jac_kernel(_vec(u), self.params, out)
        return out

    def invariant_targets(self) -> np.ndarray:
        """Invariant values at the initial state; the penalty pulls towards these."""
        out = np.zeros(self.n_invariants)
        if self.n_invariants:
            self.invariants_kernel(self.u0_array, self.params, out)
        return out

    def with_domain(self, domain_end: float) -> "IvpSystem":
        return replace(self, params=self.params.copy(), domain_end=float(domain_end))


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


# --- Dahlquist test equation: du + lam*u = 0 -------------------------------

@nb.njit(cache=True)
def _linear_decay_residual(t, u, du, params, out):
    out[0] = du[0] + params[0] * u[0]


@nb.njit(cache=True)
def _linear_decay_jac(t, u, du, params, ju, jdu):
    ju[0, 0] = params[0]
    jdu[0, 0] = 1.0


@nb.njit(cache=True)
def _linear_decay_rhs(t, u, params, out):
    out[0] = -params[0] * u[0]


def dahlquist_problem(domain_end: float = 2.0) -> IvpSystem:
    """``du + 5u = 0``, ``u(0) = 1`` with solution ``exp(-5t)``."""
    return IvpSystem(
        name="dahlquist",
        dim=1,
        t0=0.0,
        u0=(1.0,),
        domain_end=float(domain_end),
        params=np.array([5.0]),
        residual_kernel=_linear_decay_residual,
        jacobian_kernel=_linear_decay_jac,
        rhs_kernel=_linear_decay_rhs,
        analytic=lambda t: np.array([math.exp(-5.0 * t)]),
    )


# --- forced oscillation: du - t sin(10t) + u = 0 ----------------------------

@nb.njit(cache=True)
def _oscillating_residual(t, u, du, params, out):
    out[0] = du[0] - t * math.sin(10.0 * t) + u[0]


@nb.njit(cache=True)
def _oscillating_jac(t, u, du, params, ju, jdu):
    ju[0, 0] = 1.0
    jdu[0, 0] = 1.0


@nb.njit(cache=True)
def _oscillating_rhs(t, u, params, out):
    out[0] = t * math.sin(10.0 * t) - u[0]


def _oscillating_solution(t: float) -> np.ndarray:
    return np.array([
        math.sin(10.0 * t) * (99.0 / 10201.0 + t / 101.0)
        + math.cos(10.0 * t) * (20.0 / 10201.0 - 10.0 * t / 101.0)
        - 10221.0 / 10201.0 * math.exp(-t)
    ])


def oscillating_problem(domain_end: float = 15.0) -> IvpSystem:
    """``du - t sin(10t) + u = 0``, ``u(0) = -1`` on ``[0, 15]``."""
    return IvpSystem(
        name="oscillating",
        dim=1,
        t0=0.0,
        u0=(-1.0,),
        domain_end=float(domain_end),
        params=np.zeros(1),
        residual_kernel=_oscillating_residual,
        jacobian_kernel=_oscillating_jac,
        rhs_kernel=_oscillating_rhs,
        analytic=_oscillating_solution,
    )


# --- free rigid body (Euler equations) -------------------------------------
# params = (a_u, a_v, a_w, I_u, I_v, I_w)

@nb.njit(cache=True)
def _rigid_residual(t, u, du, params, out):
    out[0] = du[0] - params[0] * u[1] * u[2]
    out[1] = du[1] - params[1] * u[2] * u[0]
    out[2] = du[2] - params[2] * u[0] * u[1]


@nb.njit(cache=True)
def _rigid_jac(t, u, du, params, ju, jdu):
    ju[0, 0] = 0.0
    ju[0, 1] = -params[0] * u[2]
    ju[0, 2] = -params[0] * u[1]
    ju[1, 0] = -params[1] * u[2]
    ju[1, 1] = 0.0
    ju[1, 2] = -params[1] * u[0]
    ju[2, 0] = -params[2] * u[1]
    ju[2, 1] = -params[2] * u[0]
    ju[2, 2] = 0.0
    for i in range(3):
        for j in range(3):
            jdu[i, j] = 1.0 if i == j else 0.0


@nb.njit(cache=True)
def _rigid_rhs(t, u, params, out):
    out[0] = params[0] * u[1] * u[2]
    out[1] = params[1] * u[2] * u[0]
    out[2] = params[2] * u[0] * u[1]


@nb.njit(cache=True)
def _rigid_invariants(u, params, out):
    out[0] = u[0] * u[0] + u[1] * u[1] + u[2] * u[2]
    out[1] = 0.5 * (u[0] * u[0] / params[3] + u[1] * u[1] / params[4] + u[2] * u[2] / params[5])


@nb.njit(cache=True)
def _rigid_invariants_jac(u, params, out):
    for c in range(3):
        out[0, c] = 2.0 * u[c]
        out[1, c] = u[c] / params[3 + c]


def rigid_body_coefficients(moments=RIGID_BODY_MOMENTS) -> tuple[float, float, float]:
    iu, iv, iw = moments
    return ((iv - iw) / (iv * iw), (iw - iu) / (iw * iu), (iu - iv) / (iu * iv))


def rigid_body_problem(iv=RIGID_BODY_INITIAL_VALUES[0], domain_end: float = 30.0,
                       moments=RIGID_BODY_MOMENTS) -> IvpSystem:
    """Angular momentum of a free rigid body; conserves ``R^2`` and kinetic energy ``H``."""
    iv = tuple(float(v) for v in iv)
    if len(iv) != 3:
        raise ValueError("rigid body needs three initial values")
    a = rigid_body_coefficients(moments)
    return IvpSystem(
        name="rigid_body",
        dim=3,
        t0=0.0,
        u0=iv,
        domain_end=float(domain_end),
        params=np.array([*a, *moments], dtype=np.float64),
        residual_kernel=_rigid_residual,
        jacobian_kernel=_rigid_jac,
        rhs_kernel=_rigid_rhs,
        invariants_kernel=_rigid_invariants,
        invariants_jac_kernel=_rigid_invariants_jac,
        n_invariants=2,
    )


PROBLEMS = {
    "dahlquist": dahlquist_problem,
    "oscillating": oscillating_problem,
    "rigid_body": rigid_body_problem,
}
