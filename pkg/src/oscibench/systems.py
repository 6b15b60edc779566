"""Highly oscillatory systems q'' + Omega^2 q = g(q) and the FPU chain."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels


@dataclass(frozen=True)
class OscillatorySystem:
    """Separable Hamiltonian H = |p|^2/2 + |Omega q|^2/2 + U(q).

    Omega is block diagonal: zero on the first ``d_slow`` components and
    ``omega`` on the last ``d_fast``.  ``force`` must equal -grad U.  Pass
    numba-compiled callables to get the compiled stepping kernels.
    """

    d_slow: int
    d_fast: int
    omega: float
    force: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], float]
    name: str = "system"

    @property
    def dim(self):
        return self.d_slow + self.d_fast

    def omega_vector(self):
        w = np.zeros(self.dim)
        w[self.d_slow:] = self.omega
        return w

    def split(self, v):
        v = np.asarray(v)
        return v[: self.d_slow], v[self.d_slow:]

    def hamiltonian(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        q1 = q[self.d_slow:]
        return float(0.5 * p @ p + 0.5 * self.omega ** 2 * (q1 @ q1) + self.potential(q))

    def with_omega(self, omega):
        return OscillatorySystem(self.d_slow, self.d_fast, float(omega), self.force,
                                 self.potential, self.name)


@dataclass(frozen=True)
class State:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        p = np.array(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError(f"q and p must be 1-d of equal length, got {q.shape} and {p.shape}")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)))


@dataclass(frozen=True)
class FPUParams:
    ell: int = 3
    omega: float = 50.0

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")


def fpu_system(params: FPUParams) -> OscillatorySystem:
    """FPU chain in (x0, x1) coordinates: ``ell`` slow then ``ell`` stiff components."""
    ell = int(params.ell)
    return OscillatorySystem(ell, ell, float(params.omega), kernels.fpu_force,
                             kernels.fpu_potential, name=f"fpu(ell={ell})")


def fpu_initial_state(params: FPUParams) -> State:
    """x0_1 = 1, y0_1 = 1, x1_1 = 1/omega, y1_1 = 1, everything else zero."""
    ell = int(params.ell)
    q = np.zeros(2 * ell)
    p = np.zeros(2 * ell)
    q[0] = 1.0
    p[0] = 1.0
    q[ell] = 1.0 / params.omega
    p[ell] = 1.0
    return State(q, p, 0.0)


def fpu_transform(q_masses, p_masses):
    """Mass displacements (q_1..q_2l), (p_1..p_2l) -> transformed (x, y)."""
    q_masses = np.asarray(q_masses, dtype=float)
    p_masses = np.asarray(p_masses, dtype=float)
    if q_masses.shape != p_masses.shape or q_masses.ndim != 1 or q_masses.size % 2:
        raise ValueError("expected two vectors of equal even length 2*ell")
    r = 1.0 / math.sqrt(2.0)

    def fwd(v):
        odd, even = v[0::2], v[1::2]  # q_{2i-1}, q_{2i}
        return np.concatenate([(even + odd) * r, (even - odd) * r])

    return fwd(q_masses), fwd(p_masses)


def fpu_untransform(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size % 2:
        raise ValueError("expected two vectors of equal even length 2*ell")
    r = 1.0 / math.sqrt(2.0)

    def back(v):
        ell = v.size // 2
        v0, v1 = v[:ell], v[ell:]
        out = np.empty_like(v)
        out[0::2] = (v0 - v1) * r
        out[1::2] = (v0 + v1) * r
        return out

    return back(x), back(y)


def fpu_mass_hamiltonian(q, p, omega):
    """FPU energy in the original mass coordinates with fixed walls q_0 = q_{2l+1} = 0."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    ext = np.concatenate([[0.0], q, [0.0]])
    stiff = ext[2:-1:2] - ext[1:-1:2]      # q_{2i} - q_{2i-1}
    soft = ext[1::2] - ext[0::2]           # q_{2i+1} - q_{2i}, i = 0..ell
    return float(0.5 * p @ p + 0.25 * omega ** 2 * stiff @ stiff + np.sum(soft ** 4))


def linear_system(d_slow, d_fast, omega):
    """g = 0: free particles plus uncoupled harmonic oscillators."""
    return OscillatorySystem(d_slow, d_fast, float(omega), kernels.zero_force,
                             kernels.zero_potential, name="linear")
