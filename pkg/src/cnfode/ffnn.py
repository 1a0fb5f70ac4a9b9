"""One-hidden-layer sigmoid network ``N(t) = sum_j rho_j sigma(nu_j t + eta_j) + gamma``.

Weights are flattened in the fixed order ``[nu_1..nu_H, eta_1..eta_H,
rho_1..rho_H, gamma]``; archives and optimiser moments rely on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "NetworkWeights",
    "WeightGradient",
    "ConstantInit",
    "UniformInit",
    "n_params",
    "sigmoid",
    "network_eval",
    "network_gradients",
    "init_weights",
    "uniform_stream",
]


def n_params(hidden: int) -> int:
    return 3 * hidden + 1


@dataclass(frozen=True, eq=False)
class NetworkWeights:
    nu: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    gamma: float

    def __post_init__(self):
        for name in ("nu", "eta", "rho"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "gamma", float(self.gamma))
        if not (self.nu.shape == self.eta.shape == self.rho.shape) or self.nu.ndim != 1:
            raise ValueError("nu, eta and rho must be 1-d arrays of equal length")
        if self.H < 1:
            raise ValueError("a network needs at least one hidden neuron")
        if not np.all(np.isfinite(self.flat())):
            raise ValueError("network weights must be finite")

    @property
    def H(self) -> int:
        return self.nu.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.nu, self.eta, self.rho, [self.gamma]])

    @classmethod
    def from_flat(cls, vec) -> "NetworkWeights":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or (vec.size - 1) % 3 or vec.size < 4:
            raise ValueError(f"flat weight vector of length {vec.size} is not 3H+1")
        h = (vec.size - 1) // 3
        return cls(vec[:h].copy(), vec[h:2 * h].copy(), vec[2 * h:3 * h].copy(), vec[3 * h])

    def __eq__(self, other):
        if not isinstance(other, NetworkWeights):
            return NotImplemented
        return np.array_equal(self.flat(), other.flat())


# Partial derivatives share the weight layout.
WeightGradient = NetworkWeights


def sigmoid(z):
    """Logistic function, overflow-free for large ``|z|``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def network_eval(w: NetworkWeights, t: float) -> tuple[float, float]:
    """Network output and its derivative in ``t``."""
    s = sigmoid(w.nu * t + w.eta)
    ds = s * (1.0 - s)
    return float(np.sum(w.rho * s) + w.gamma), float(np.sum(w.rho * ds * w.nu))


def network_gradients(w: NetworkWeights, t: float) -> tuple[WeightGradient, WeightGradient]:
    """Gradients of ``N`` and ``dN/dt`` with respect to every weight."""
    s = sigmoid(w.nu * t + w.eta)
    ds = s * (1.0 - s)
    dds = ds * (1.0 - 2.0 * s)
    grad_n = WeightGradient(w.rho * ds * t, w.rho * ds, s, 1.0)
    grad_dn = WeightGradient(
        w.rho * (ds + dds * w.nu * t),
        w.rho * dds * w.nu,
        ds * w.nu,
        0.0,
    )
    return grad_n, grad_dn


@dataclass(frozen=True)
class ConstantInit:
    value: float = 0.0


@dataclass(frozen=True)
class UniformInit:
    lo: float
    hi: float
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise ValueError(f"invalid uniform range [{self.lo}, {self.hi}]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


InitMode = Union[ConstantInit, UniformInit]


def uniform_stream(seed: int, network_index: int, count: int) -> np.ndarray:
    """``count`` doubles in ``[0, 1)`` drawn for one network.

    Philox4x64-10 keyed with ``(seed, network_index)``; each raw 64-bit word
    ``x`` maps to ``(x >> 11) * 2**-53``. Because the key includes the network
    index, network ``k`` gets the same draw no matter how many networks the
    neural form has.
    """
    key = np.array([seed, network_index], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def init_weights(mode: InitMode, hidden: int, network_index: int = 0) -> NetworkWeights:
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    size = n_params(hidden)
    if isinstance(mode, ConstantInit):
        return NetworkWeights.from_flat(np.full(size, float(mode.value)))
    if isinstance(mode, UniformInit):
        u = uniform_stream(mode.seed, network_index, size)
        return NetworkWeights.from_flat(mode.lo + (mode.hi - mode.lo) * u)
    raise TypeError(f"unknown initialisation mode {mode!r}")
