"""Trigonometric and IMEX integrators for highly oscillatory Hamiltonian
systems, with an FPU-chain benchmark harness."""

from .filters import DomainError, MethodSpec, builtin_methods, get_method, modified_frequency, sinc
from .integrator import (NearResonance, NoConvergence, NonFiniteState, integrate,
                         make_context, step_one)
from .systems import FPUParams, OscillatorySystem, State, fpu_initial_state, fpu_system

__all__ = [
    "DomainError", "MethodSpec", "builtin_methods", "get_method", "modified_frequency", "sinc",
    "NearResonance", "NoConvergence", "NonFiniteState", "integrate", "make_context", "step_one",
    "FPUParams", "OscillatorySystem", "State", "fpu_initial_state", "fpu_system",
]
