"""Filter functions, modified-frequency maps and the method registry.

A (modified) trigonometric integrator is fixed by three even filter
functions psi, phi, psi1 of the scaled frequency xi = h * omega_tilde and by
a map (h, omega) -> omega_tilde.  psi1 is stored in closed form for every
method so that genuine resonances (A and D at xi = pi) show up as large
values instead of 0/0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SINC_TAYLOR_THRESHOLD = 1e-4


class DomainError(ValueError):
    """(h, omega) lies outside the domain of a frequency map."""


def sinc(x):
    """sin(x)/x, with the Taylor polynomial 1 - x^2/6 + x^4/120 near zero.

    Works on scalars and arrays.  Scalars come back as Python floats.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if abs(x) < SINC_TAYLOR_THRESHOLD:
            x2 = x * x
            return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
        return math.sin(x) / x
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SINC_TAYLOR_THRESHOLD
    safe = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)


def _tan_half_ratio(x):
    # tan(x/2)/(x/2); equals sinc^2(x/2)/sinc(x) away from resonance
    if np.ndim(x) == 0:
        half = 0.5 * float(x)
        if abs(half) < SINC_TAYLOR_THRESHOLD:
            h2 = half * half
            return 1.0 + h2 / 3.0 + 2.0 * h2 * h2 / 15.0
        return math.tan(half) / half
    half = 0.5 * np.asarray(x, dtype=float)
    small = np.abs(half) < SINC_TAYLOR_THRESHOLD
    safe = np.where(small, 1.0, half)
    h2 = half * half
    return np.where(small, 1.0 + h2 / 3.0 + 2.0 * h2 * h2 / 15.0, np.tan(safe) / safe)


@dataclass(frozen=True)
class FilterFunction:
    """Even real filter xi -> f(xi) with f(0) = 1."""

    func: Callable
    formula: str

    def __call__(self, xi):
        return self.func(xi)

    def __repr__(self):
        return f"FilterFunction({self.formula!r})"


@dataclass(frozen=True)
class FrequencyMap:
    """(h, omega) -> omega_tilde plus its domain predicate.

    Both callables receive |h|; the modified frequency is even in h.
    """

    name: str
    func: Callable[[float, float], float]
    domain: Callable[[float, float], bool] = lambda h, w: True
    description: str = ""

    def valid(self, h, omega):
        return bool(self.domain(abs(h), omega))

    def __call__(self, h, omega):
        if omega == 0.0:
            return 0.0
        h = abs(h)
        if not self.domain(h, omega):
            raise DomainError(
                f"{self.name} frequency map has no solution for h*omega = {h * omega:g}"
            )
        return float(self.func(h, omega))


ONE = FilterFunction(lambda xi: np.ones_like(xi, dtype=float) if np.ndim(xi) else 1.0, "1")
SINC = FilterFunction(sinc, "sinc(xi)")
SINC2 = FilterFunction(lambda xi: sinc(xi) ** 2, "sinc(xi)^2")
SINC3 = FilterFunction(lambda xi: sinc(xi) ** 3, "sinc(xi)^3")
SINC2_HALF = FilterFunction(lambda xi: sinc(0.5 * xi) ** 2, "sinc(xi/2)^2")
TAN_HALF = FilterFunction(_tan_half_ratio, "tan(xi/2)/(xi/2)")
HOCHBRUCK_LUBICH = FilterFunction(
    lambda xi: sinc(xi) * (1.0 + np.sin(0.5 * np.asarray(xi, dtype=float)) ** 2 / 3.0)
    if np.ndim(xi) else sinc(xi) * (1.0 + math.sin(0.5 * xi) ** 2 / 3.0),
    "sinc(xi)*(1 + sin(xi/2)^2/3)",
)
COS2_HALF = FilterFunction(lambda xi: np.cos(0.5 * np.asarray(xi, dtype=float)) ** 2
                           if np.ndim(xi) else math.cos(0.5 * xi) ** 2, "cos(xi/2)^2")
COS_HALF = FilterFunction(lambda xi: np.cos(0.5 * np.asarray(xi, dtype=float))
                          if np.ndim(xi) else math.cos(0.5 * xi), "cos(xi/2)")
SEC_HALF = FilterFunction(lambda xi: 1.0 / np.cos(0.5 * np.asarray(xi, dtype=float))
                          if np.ndim(xi) else 1.0 / math.cos(0.5 * xi), "1/cos(xi/2)")

IDENTITY = FrequencyMap("identity", lambda h, w: w, description="omega_tilde = omega")
VERLET = FrequencyMap(
    "verlet",
    lambda h, w: 2.0 / h * math.asin(0.5 * h * w),
    domain=lambda h, w: 0.5 * h * w <= 1.0,
    description="sin(h*omega_tilde/2) = h*omega/2",
)
IMEX_MAP = FrequencyMap(
    "imex",
    lambda h, w: 2.0 / h * math.atan(0.5 * h * w),
    description="tan(h*omega_tilde/2) = h*omega/2",
)


@dataclass(frozen=True)
class MethodSpec:
    """A named (modified) trigonometric integrator.

    ``momentum_scale`` kappa(xi) says which fast-block momentum is canonical:
    the map is symplectic in (q, kappa * p).  It is 1 for everything except
    the Stormer/Verlet entry, whose canonical momentum is velocity Verlet's
    p_vv = cos(xi/2) * p.
    """

    name: str
    psi: FilterFunction
    phi: FilterFunction
    psi1: FilterFunction
    freq: FrequencyMap = IDENTITY
    symplectic: bool = False
    momentum_scale: FilterFunction = ONE
    kind: str = "trig"
    reference: str = field(default="", compare=False)

    @property
    def is_trig(self):
        return self.kind == "trig"


@dataclass(frozen=True)
class BlockScalars:
    """Every per-block number a step needs, evaluated once.

    The slow block is the omega -> 0 limit: cos = 1, sin = 0, drift = h,
    all filters and the ratio omega_tilde/omega equal to 1.
    """

    omega: float
    omega_tilde: float
    cos: float
    sin: float
    sinc: float
    psi: float
    phi: float
    psi1: float
    ratio: float
    momentum_scale: float
    drift: float
    kick: float

    @classmethod
    def slow(cls, h):
        return cls(0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, h, 0.0)

    @classmethod
    def fast(cls, spec: MethodSpec, h, omega):
        if omega == 0.0:
            return cls.slow(h)
        wt = modified_frequency(spec, h, omega)
        xi = h * wt
        ratio = wt / omega
        s = sinc(xi)
        return cls(
            omega=omega,
            omega_tilde=wt,
            cos=math.cos(xi),
            sin=math.sin(xi),
            sinc=s,
            psi=float(spec.psi(xi)),
            phi=float(spec.phi(xi)),
            psi1=float(spec.psi1(xi)),
            ratio=ratio,
            momentum_scale=float(spec.momentum_scale(xi)),
            drift=h * ratio * s,
            kick=-omega * math.sin(xi),
        )


def _registry():
    methods = [
        MethodSpec("A", SINC2_HALF, ONE, TAN_HALF, reference="Gautschi 1961"),
        MethodSpec("B", SINC, ONE, ONE, symplectic=True, reference="Deuflhard 1979"),
        MethodSpec("C", SINC2, SINC, SINC, symplectic=True, reference="Garcia-Archilla et al. 1999"),
        MethodSpec("D", SINC2_HALF, HOCHBRUCK_LUBICH, TAN_HALF, reference="Hochbruck & Lubich 1999"),
        MethodSpec("E", SINC2, ONE, SINC, reference="Hairer & Lubich 2000"),
        MethodSpec("G", SINC3, SINC, SINC2, reference="Grimm & Hochbruck 2006"),
        MethodSpec("SV", ONE, ONE, SEC_HALF, freq=VERLET, symplectic=True,
                   momentum_scale=COS_HALF, reference="Stormer/Verlet"),
        MethodSpec("IMEX", COS2_HALF, ONE, ONE, freq=IMEX_MAP, symplectic=True,
                   reference="Stern & Grinspun 2009"),
        MethodSpec("MIDPOINT", ONE, ONE, ONE, kind="midpoint", reference="implicit midpoint"),
    ]
    return {m.name: m for m in methods}


_REGISTRY = _registry()


def builtin_methods():
    """The nine registry entries, in their canonical order."""
    return list(_REGISTRY.values())


def get_method(name):
    """Look up a registry method by case-insensitive name."""
    if isinstance(name, MethodSpec):
        return name
    try:
        return _REGISTRY[str(name).strip().upper()]
    except KeyError:
        raise KeyError(
            f"unknown method {name!r}; expected one of {', '.join(_REGISTRY)}"
        ) from None


def trig_methods():
    return [m for m in _REGISTRY.values() if m.is_trig]


def modified_frequency(spec, h, omega):
    """omega_tilde for ``spec`` at step ``h``; raises DomainError off the map's domain."""
    spec = get_method(spec)
    if omega < 0:
        raise DomainError(f"omega must be non-negative, got {omega}")
    return spec.freq(h, omega)
