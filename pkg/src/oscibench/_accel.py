"""JIT switch for the hot kernels.

Kernels are written once in numpy style and compiled with numba when it is
available.  Setting ``OSCIBENCH_NO_NUMBA=1`` in the environment (before
import) selects the plain-numpy path, which runs the identical source
uncompiled.
"""

import os

import numpy as np

_DISABLED = os.environ.get("OSCIBENCH_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - exercised via the env flag in a subprocess
    _numba = None

JIT_ENABLED = _numba is not None


def njit(fn=None, **kwargs):
    """``numba.njit`` when enabled, identity otherwise.

    The uncompiled function stays reachable as ``.py_func`` in both modes.
    """
    def wrap(f):
        if JIT_ENABLED:
            return _numba.njit(**kwargs)(f)
        f.py_func = f
        return f

    if fn is not None:
        return wrap(fn)
    return wrap


def is_jitted(fn):
    return JIT_ENABLED and isinstance(fn, _numba.core.registry.CPUDispatcher)


def pick(kernel, *callables):
    """Return the compiled kernel if every callable argument is compiled too.

    A numba kernel cannot call a plain Python function, so a system whose
    force is ordinary Python runs through the uncompiled kernel source.
    """
    if JIT_ENABLED and all(is_jitted(c) for c in callables):
        return kernel
    return kernel.py_func


def kernel_array(a):
    """Writable, C-contiguous float64 view or copy of ``a``.

    numba compiles one specialization per array layout and writeability, so
    feeding kernels a single array flavour avoids repeated compilation.
    """
    return np.require(a, dtype=np.float64, requirements=["C", "W"])
