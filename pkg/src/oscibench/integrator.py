"""Time stepping: (modified) trigonometric schemes and the classical baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from ._accel import kernel_array, pick
from .filters import BlockScalars, MethodSpec, get_method
from .systems import OscillatorySystem, State

RECOVERY_SINC_MIN = 1e-8


class NonFiniteState(FloatingPointError):
    """The numerical state blew up (NaN, inf, or beyond kernels.BLOWUP)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NearResonance(ValueError):
    """|sinc(h*omega_tilde)| too small for the requested operation."""


class NoConvergence(RuntimeError):
    def __init__(self, max_iter, residual):
        super().__init__(f"Newton iteration did not converge in {max_iter} iterations "
                         f"(residual {residual:.3e})")
        self.max_iter = max_iter
        self.residual = residual


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class StepperContext:
    """Method + system + step size with all blockwise scalars evaluated.

    The ``*_v`` vectors hold per-component values (slow entries first), so a
    step is plain elementwise arithmetic.
    """

    spec: MethodSpec
    system: OscillatorySystem
    h: float
    slow: BlockScalars
    fast: BlockScalars
    cos_v: np.ndarray = field(repr=False)
    drift_v: np.ndarray = field(repr=False)
    kick_v: np.ndarray = field(repr=False)
    half_kick_v: np.ndarray = field(repr=False)
    phi_v: np.ndarray = field(repr=False)
    psi_v: np.ndarray = field(repr=False)
    scale_v: np.ndarray = field(repr=False)

    @property
    def omega_tilde(self):
        return self.fast.omega_tilde

    def tables(self):
        """(cos, drift, kick, half-kick) as one-stage tables for the kernels."""
        return (self.cos_v[None, :], self.drift_v[None, :], self.kick_v[None, :],
                self.half_kick_v[None, :])


def _block_vector(system, slow_value, fast_value):
    v = np.empty(system.dim)
    v[: system.d_slow] = slow_value
    v[system.d_slow:] = fast_value
    return _frozen(v)


def make_context(spec, system: OscillatorySystem, h: float) -> StepperContext:
    """Precompute every scalar of one step; raises DomainError off the frequency map."""
    spec = get_method(spec)
    if not spec.is_trig:
        raise ValueError(f"{spec.name} is not a trigonometric method; "
                         "use implicit_midpoint_step")
    h = float(h)
    if h == 0.0 or not math.isfinite(h):
        raise ValueError(f"step size must be finite and nonzero, got {h}")
    slow = BlockScalars.slow(h)
    fast = BlockScalars.fast(spec, h, system.omega)
    for name, value in vars(fast).items():
        if not math.isfinite(value):
            raise NearResonance(f"{spec.name}: {name} is not finite at h*omega = {h * system.omega:g}")

    def vec(attr):
        return _block_vector(system, getattr(slow, attr), getattr(fast, attr))

    # two-step filter Psi = (omega_tilde/omega) sinc(h omega_tilde) psi1, blockwise
    psi_two = _block_vector(system, 1.0, fast.ratio * fast.sinc * fast.psi1)
    return StepperContext(
        spec=spec, system=system, h=h, slow=slow, fast=fast,
        cos_v=vec("cos"), drift_v=vec("drift"), kick_v=vec("kick"),
        half_kick_v=_block_vector(system, 0.5 * h, 0.5 * h * fast.psi1),
        phi_v=vec("phi"), psi_v=psi_two, scale_v=vec("momentum_scale"),
    )


def _advance(ctx, q, p, g, n, fsal=True):
    kernel = pick(kernels.trig_advance, ctx.system.force)
    tables = [kernel_array(t) for t in ctx.tables()]
    return kernel(ctx.system.force, q, p, g, n, *tables, kernel_array(ctx.phi_v), fsal)


def step_one(ctx: StepperContext, s: State) -> State:
    """One kick-rotate-kick step of the (modified) trigonometric scheme."""
    q = np.array(s.q, dtype=float)
    p = np.array(s.p, dtype=float)
    g = np.asarray(ctx.system.force(ctx.phi_v * q), dtype=float)
    if _advance(ctx, q, p, g, 1) < 1:
        raise NonFiniteState(f"{ctx.spec.name}: state not finite after step at t = {s.t}", step=1)
    return State(q, p, s.t + ctx.h)


def step_two_term(ctx: StepperContext, q_prev, q_curr) -> np.ndarray:
    """q_next = 2 cos(h Omega_tilde) q_curr - q_prev + h^2 Psi g(Phi q_curr)."""
    q_prev = np.asarray(q_prev, dtype=float)
    q_curr = np.asarray(q_curr, dtype=float)
    g = np.asarray(ctx.system.force(ctx.phi_v * q_curr), dtype=float)
    q_next = 2.0 * ctx.cos_v * q_curr - q_prev + ctx.h ** 2 * ctx.psi_v * g
    if not np.all(np.isfinite(q_next)):
        raise NonFiniteState(f"{ctx.spec.name}: two-step recurrence produced a non-finite position")
    return q_next


def recover_momentum(ctx: StepperContext, q_prev, q_next) -> np.ndarray:
    """p_n from the central difference (q_{n+1} - q_{n-1}) / 2h."""
    if ctx.system.d_fast and abs(ctx.fast.sinc) <= RECOVERY_SINC_MIN:
        raise NearResonance(
            f"{ctx.spec.name}: |sinc(h*omega_tilde)| = {abs(ctx.fast.sinc):.2e} "
            "makes momentum recovery ill-conditioned")
    central = (np.asarray(q_next, dtype=float) - np.asarray(q_prev, dtype=float)) / (2.0 * ctx.h)
    return central / (ctx.drift_v / ctx.h)


def imex_direct_step(system: OscillatorySystem, h: float, q_prev, q_curr) -> np.ndarray:
    """Linearly implicit IMEX recurrence, solved componentwise.

    (q+ - 2q + q-) + (h Omega / 2)^2 (q+ + 2q + q-) = h^2 g(q)
    """
    q_prev = np.asarray(q_prev, dtype=float)
    q_curr = np.asarray(q_curr, dtype=float)
    a = (0.5 * h * system.omega_vector()) ** 2
    rhs = 2.0 * (1.0 - a) * q_curr - (1.0 + a) * q_prev + h * h * np.asarray(system.force(q_curr))
    return rhs / (1.0 + a)


def stormer_verlet_step(system: OscillatorySystem, h: float, s: State) -> State:
    """Velocity Verlet with the full force -Omega^2 q + g(q)."""
    q = np.array(s.q, dtype=float)
    p = np.array(s.p, dtype=float)
    om2 = system.omega_vector() ** 2
    f = np.asarray(system.force(q), dtype=float) - om2 * q
    kernel = pick(kernels.verlet_advance, system.force)
    if kernel(system.force, q, p, f, 1, float(h), om2) < 1:
        raise NonFiniteState(f"Stormer/Verlet: state not finite after step at t = {s.t}", step=1)
    return State(q, p, s.t + h)


def stormer_verlet_run(system: OscillatorySystem, h: float, s0: State, n_steps: int) -> State:
    """``n_steps`` of velocity Verlet; raises NonFiniteState at blow-up."""
    q = np.array(s0.q, dtype=float)
    p = np.array(s0.p, dtype=float)
    om2 = system.omega_vector() ** 2
    f = np.asarray(system.force(q), dtype=float) - om2 * q
    kernel = pick(kernels.verlet_advance, system.force)
    done = kernel(system.force, q, p, f, int(n_steps), float(h), om2)
    if done < n_steps:
        raise NonFiniteState(f"Stormer/Verlet blew up at step {done + 1}", step=done + 1)
    return State(q, p, s0.t + n_steps * h)


def force_jacobian(force, q, eps=1e-6):
    """Central-difference Jacobian of ``force`` at ``q``."""
    q = np.asarray(q, dtype=float)
    d = q.size
    jac = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        jac[:, j] = (np.asarray(force(q + e)) - np.asarray(force(q - e))) / (2.0 * eps)
    return jac


def implicit_midpoint_step(system: OscillatorySystem, h: float, s: State,
                           tol: float = 1e-12, max_iter: int = 25,
                           return_iterations: bool = False):
    """Implicit midpoint rule, solved by damped Newton on the midpoint m.

    With F(m) = -Omega^2 m + g(m) the midpoint satisfies
    m = q + h/2 p + h^2/4 F(m); then q+ = 2m - q and p+ = 2(q+ - q)/h - p,
    which equals p + h F(m) at the solution.
    Convergence means max|residual| <= tol * max(1, max|m|).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    q = np.asarray(s.q, dtype=float)
    p = np.asarray(s.p, dtype=float)
    om2 = system.omega_vector() ** 2
    c = 0.25 * h * h
    base = q + 0.5 * h * p

    def total_force(m):
        return np.asarray(system.force(m), dtype=float) - om2 * m

    def residual(m):
        return m - base - c * total_force(m)

    m = base.copy()
    r = residual(m)
    rnorm = np.max(np.abs(r))
    for it in range(1, max_iter + 1):
        if not np.isfinite(rnorm):
            break
        jac = np.eye(q.size) - c * (force_jacobian(system.force, m) - np.diag(om2))
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while True:
            m_try = m + lam * delta
            r_try = residual(m_try)
            n_try = np.max(np.abs(r_try))
            if np.isfinite(n_try) and n_try < rnorm or lam < 1e-4:
                break
            lam *= 0.5
        m, r, rnorm = m_try, r_try, n_try
        if np.isfinite(rnorm) and rnorm <= tol * max(1.0, np.max(np.abs(m))):
            # one undamped polishing step takes m to roundoff level, so the
            # symmetric momentum update below does not amplify the residual
            polished = m + np.linalg.solve(jac, -r)
            if np.max(np.abs(residual(polished))) <= rnorm:
                m = polished
            q_next = 2.0 * m - q
            # (q+ - q)/h = (p + p+)/2 keeps quadratic invariants to roundoff
            out = State(q_next, 2.0 * (q_next - q) / h - p, s.t + h)
            return (out, it) if return_iterations else out
    raise NoConvergence(max_iter, float(rnorm))


def symplecticity_defect(ctx: StepperContext, s: State, fd_eps: float = 1e-6) -> float:
    """max |M^T J M - J| for the step map's finite-difference Jacobian M.

    The map is taken in canonical coordinates (q, kappa p), where kappa is
    the method's momentum scale (1 except for Stormer/Verlet).
    """
    if not fd_eps > 0:
        raise ValueError("fd_eps must be positive")
    d = ctx.system.dim
    scale = ctx.scale_v
    x0 = np.concatenate([s.q, scale * s.p])

    def step_map(x):
        out = step_one(ctx, State(x[:d], x[d:] / scale, s.t))
        return np.concatenate([out.q, scale * out.p])

    M = np.empty((2 * d, 2 * d))
    for j in range(2 * d):
        e = np.zeros(2 * d)
        e[j] = fd_eps
        M[:, j] = (step_map(x0 + e) - step_map(x0 - e)) / (2.0 * fd_eps)
    J = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    return float(np.max(np.abs(M.T @ J @ M - J)))


@dataclass
class Trajectory:
    """States sampled every ``stride`` steps, plus whatever the observer returned."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    stride: int
    observations: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def state(self, k):
        return State(self.q[k], self.p[k], self.t[k])


def integrate(ctx: StepperContext, s0: State, n_steps: int, stride: int = 1,
              observer: Optional[Callable[[State], object]] = None,
              fsal: bool = True) -> Trajectory:
    """Iterate step_one ``n_steps`` times, sampling every ``stride`` steps.

    Sample k sits at t0 + k*stride*h (times are products, not running sums).
    A final partial stride is sampled too.  Raises NonFiniteState carrying
    the 1-based index of the failing step.
    """
    if n_steps < 0 or stride < 1:
        raise ValueError("need n_steps >= 0 and stride >= 1")
    q = np.array(s0.q, dtype=float)
    p = np.array(s0.p, dtype=float)
    g = np.asarray(ctx.system.force(ctx.phi_v * q), dtype=float).copy()
    steps = [0]
    qs = [q.copy()]
    ps = [p.copy()]
    obs = []
    if observer is not None:
        obs.append(observer(s0))
    done = 0
    while done < n_steps:
        chunk = min(stride, n_steps - done)
        got = _advance(ctx, q, p, g, chunk, fsal)
        if got < chunk:
            raise NonFiniteState(f"{ctx.spec.name}: state not finite at step {done + got + 1}",
                                 step=done + got + 1)
        done += chunk
        steps.append(done)
        qs.append(q.copy())
        ps.append(p.copy())
        if observer is not None:
            obs.append(observer(State(q, p, s0.t + done * ctx.h)))
    t = s0.t + np.asarray(steps, dtype=float) * ctx.h
    return Trajectory(t, np.array(qs), np.array(ps), stride, obs)
