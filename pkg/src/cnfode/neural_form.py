"""Collocation neural forms of order ``m``.

With ``s = t - t0`` and networks ``N_k`` evaluated at ``s``:

* TSM:  ``u(t) = u0 + sum_{k=1}^m N_k(s) s^k`` (initial value exact by construction)
* mTSM: ``u(t) = N_1(s) + sum_{k=2}^m N_k(s) s^(k-1)`` (initial value learned)

A subdomain form is the same expression anchored at the subdomain start.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ffnn import (
    InitMode,
    NetworkWeights,
    WeightGradient,
    init_weights,
    n_params,
    network_eval,
    network_gradients,
)

__all__ = ["TSM", "MTSM", "VARIANTS", "WeightMatrix", "NeuralFormSpec", "nf_eval", "nf_weight_grads", "exponents"]

TSM = "TSM"
MTSM = "mTSM"
VARIANTS = (TSM, MTSM)


@dataclass(eq=False)
class WeightMatrix:
    """The ``m`` networks of one neural form, stored row-wise as flat weight vectors."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.array(self.data, dtype=np.float64, ndmin=2)
        if self.data.ndim != 2 or (self.data.shape[1] - 1) % 3 or self.data.shape[1] < 4:
            raise ValueError(f"weight matrix shape {self.data.shape} is not (m, 3H+1)")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def H(self) -> int:
        return (self.data.shape[1] - 1) // 3

    @property
    def networks(self) -> list[NetworkWeights]:
        return [NetworkWeights.from_flat(row) for row in self.data]

    @classmethod
    def from_networks(cls, networks: Sequence[NetworkWeights]) -> "WeightMatrix":
        if len({w.H for w in networks}) != 1:
            raise ValueError("all networks of a neural form must share H")
        return cls(np.stack([w.flat() for w in networks]))

    @classmethod
    def initial(cls, mode: InitMode, m: int, hidden: int) -> "WeightMatrix":
        if m < 1:
            raise ValueError("order m must be >= 1")
        return cls.from_networks([init_weights(mode, hidden, k) for k in range(m)])

    @classmethod
    def zeros(cls, m: int, hidden: int) -> "WeightMatrix":
        return cls(np.zeros((m, n_params(hidden))))

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.data.copy())

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class NeuralFormSpec:
    variant: str
    m: int
    t0: float = 0.0
    u0: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.m < 1:
            raise ValueError("order m must be >= 1")


def exponents(variant: str, m: int) -> list[int]:
    """Power of ``s`` multiplying each network."""
    return [k + 1 for k in range(m)] if variant == TSM else [k for k in range(m)]


def _powers(s: float, top: int) -> list[float]:
    pw = [1.0]
    for _ in range(top):
        pw.append(pw[-1] * s)
    return pw


def nf_eval(spec: NeuralFormSpec, P: WeightMatrix, t: float) -> tuple[float, float]:
    """Value of the neural form at ``t`` and its time derivative."""
    if P.m != spec.m:
        raise ValueError(f"weight matrix has {P.m} networks, spec says m={spec.m}")
    s = t - spec.t0
    exps = exponents(spec.variant, spec.m)
    pw = _powers(s, exps[-1])
    value = spec.u0 if spec.variant == TSM else 0.0
    dvalue = 0.0
    for w, e in zip(P.networks, exps):
        n, dn = network_eval(w, s)
        value += n * pw[e]
        dvalue += dn * pw[e]
        if e:
            dvalue += e * n * pw[e - 1]
    return value, dvalue


def nf_weight_grads(spec: NeuralFormSpec, P: WeightMatrix, t: float
                    ) -> tuple[list[WeightGradient], list[WeightGradient]]:
    """Per-network gradients of the form's value and time derivative."""
    if P.m != spec.m:
        raise ValueError(f"weight matrix has {P.m} networks, spec says m={spec.m}")
    s = t - spec.t0
    exps = exponents(spec.variant, spec.m)
    pw = _powers(s, exps[-1])
    grad_value, grad_dvalue = [], []
    for w, e in zip(P.networks, exps):
        gn, gdn = network_gradients(w, s)
        gv = gn.flat() * pw[e]
        gdv = gdn.flat() * pw[e]
        if e:
            gdv = gdv + e * pw[e - 1] * gn.flat()
        grad_value.append(WeightGradient.from_flat(gv))
        grad_dvalue.append(WeightGradient.from_flat(gdv))
    return grad_value, grad_dvalue
