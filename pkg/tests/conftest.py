import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oscibench.systems import FPUParams, fpu_initial_state, fpu_system

# numba compiles on first call, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def fpu50():
    params = FPUParams(3, 50.0)
    return fpu_system(params), fpu_initial_state(params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_fpu_state(rng, scale=1.0, omega=50.0, ell=3):
    """Slow O(1) components, fast positions O(1/omega), momenta O(1)."""
    from oscibench.systems import State

    q = rng.uniform(-scale, scale, 2 * ell)
    q[ell:] /= omega
    p = rng.uniform(-scale, scale, 2 * ell)
    return State(q, p, 0.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
