"""Energies, modulated-Fourier consistency constants and averaged dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._accel import njit, pick
from .filters import MethodSpec, get_method, modified_frequency, sinc
from .integrator import NonFiniteState, force_jacobian
from .systems import OscillatorySystem, State

RESONANCE_SINC_MIN = 1e-12


@dataclass(frozen=True)
class EnergyReport:
    """Energies of one state.  The ``*tilde`` fields use omega_tilde and
    p_tilde = (omega_tilde/omega) p on the fast block; for an identity
    frequency map they coincide with H, I, J."""

    H: float
    I_j: tuple
    I: float
    J: float
    coupling: float
    Htilde: float
    Itilde: float
    Jtilde: float
    omega: float
    omega_tilde: float


def _omega_tilde(spec, h, omega):
    if spec is None:
        return omega
    return modified_frequency(spec, h, omega)


def energies(system: OscillatorySystem, spec: Optional[MethodSpec], h: float, s: State) -> EnergyReport:
    spec = get_method(spec) if spec is not None else None
    w = system.omega
    wt = _omega_tilde(spec, h, w) if w > 0 else 0.0
    q0, q1 = system.split(s.q)
    p0, p1 = system.split(s.p)
    i_j = 0.5 * p1 ** 2 + 0.5 * w ** 2 * q1 ** 2
    total_i = float(np.sum(i_j))
    g1 = system.split(system.force(np.asarray(s.q)))[1]
    coupling = float(q1 @ g1)
    u = float(system.potential(np.asarray(s.q)))
    slow_kin = 0.5 * float(p0 @ p0)
    ratio = wt / w if w > 0 else 1.0
    pt1 = ratio * p1
    i_tilde = float(0.5 * pt1 @ pt1 + 0.5 * wt ** 2 * q1 @ q1)
    return EnergyReport(
        H=slow_kin + total_i + u,
        I_j=tuple(float(v) for v in i_j),
        I=total_i,
        J=total_i - coupling,
        coupling=coupling,
        Htilde=slow_kin + i_tilde + u,
        Itilde=i_tilde,
        Jtilde=i_tilde - coupling,
        omega=w,
        omega_tilde=wt,
    )


@dataclass(frozen=True)
class MFEConstants:
    """Leading-order modulated Fourier constants of a method at (h, omega).

    ``resonant`` is set when sinc(h omega_tilde) or sinc(h omega_tilde / 2)
    is below 1e-12 in magnitude; alpha and gamma are then reported as +-inf.
    """

    alpha: float
    beta: float
    gamma: float
    rho: float
    rho_tilde: float
    gamma_over_phi: float
    resonant: bool
    h_omega_tilde: float


def mfe_constants(spec, h: float, omega: float) -> MFEConstants:
    spec = get_method(spec)
    if not spec.is_trig:
        raise ValueError(f"{spec.name} has no filter-function description")
    if not omega > 0:
        raise ValueError("omega must be positive")
    wt = modified_frequency(spec, h, omega)
    xi = h * wt
    psi = float(spec.psi(xi))
    phi = float(spec.phi(xi))
    psi1 = float(spec.psi1(xi))
    s_full = sinc(xi)
    s_half = sinc(0.5 * xi)
    r2 = (omega / wt) ** 2
    resonant = abs(s_full) < RESONANCE_SINC_MIN or abs(s_half) < RESONANCE_SINC_MIN
    if abs(s_full) < RESONANCE_SINC_MIN:
        alpha = math.copysign(math.inf, psi1 * phi) if psi1 * phi != 0 else math.inf
    else:
        # omega psi phi / (omega_tilde sinc) collapses to psi1 * phi
        alpha = psi1 * phi
    if abs(s_half) < RESONANCE_SINC_MIN:
        gamma = math.copysign(math.inf, psi * phi) if psi * phi != 0 else math.inf
        rho = gamma_over_phi = math.inf
    else:
        gamma = r2 * psi * phi / s_half ** 2
        rho = psi / s_half ** 2 - 1.0
        gamma_over_phi = r2 * psi / s_half ** 2
    return MFEConstants(alpha, phi * phi, gamma, rho, (wt / omega) ** 2 - 1.0,
                        gamma_over_phi, resonant, xi)


def energy_identities_check(system: OscillatorySystem, spec, h: float, s: State):
    """Absolute defects of the two exact identities linking H, J to their
    modified counterparts (rho_tilde = omega_tilde^2/omega^2 - 1):

        H = [Htilde - rho_tilde q1.g1] - rho_tilde J
        J = (omega^2/omega_tilde^2) [Jtilde - rho_tilde q1.g1]
    """
    rep = energies(system, spec, h, s)
    rt = (rep.omega_tilde / rep.omega) ** 2 - 1.0
    rhs_h = (rep.Htilde - rt * rep.coupling) - rt * rep.J
    rhs_j = (rep.omega / rep.omega_tilde) ** 2 * (rep.Jtilde - rt * rep.coupling)
    return abs(rep.H - rhs_h), abs(rep.J - rhs_j)


def max_deviation(series: Sequence[float]) -> float:
    """max_k |x_k - x_0|."""
    a = np.asarray(series, dtype=float)
    if a.size == 0:
        raise ValueError("max_deviation of an empty series")
    return float(np.max(np.abs(a - a[0])))


# --- averaged (principal modulated Fourier) equations ----------------------

@dataclass(frozen=True)
class AveragedState:
    t: float
    y0: np.ndarray
    y0dot: np.ndarray
    z1: np.ndarray

    def predicted_energies(self, omega):
        """I_j ~ 2 omega^2 |z_1j|^2."""
        return 2.0 * omega ** 2 * np.abs(self.z1) ** 2


@njit
def averaged_rk4(force, x, n, dt, omega, ds, df, eps, stride):
    """RK4 for y0'' = g0(y0, g1(y0,0)/omega^2) + d2g0/dx1^2 (z1, conj z1),
    2 i omega z1' = dg1/dx1(y0, 0) z1.

    Packed state x = (y0, y0dot, Re z1, Im z1), updated in place.  Returns
    samples every ``stride`` steps (row 0 is the initial state) and the
    number of steps completed.
    """
    d = ds + df
    m = x.shape[0]
    nsamp = n // stride + 1
    out = np.empty((nsamp, m))
    out[0] = x
    k = np.empty((4, m))
    y = np.empty(m)
    xx = np.zeros(d)
    for step in range(n):
        for st in range(4):
            if st == 0:
                y[:] = x
            elif st < 3:
                y[:] = x + 0.5 * dt * k[st - 1]
            else:
                y[:] = x + dt * k[2]
            xx[:ds] = y[:ds]
            xx[ds:] = 0.0
            g_at = force(xx)
            zr = y[2 * ds:2 * ds + df]
            zi = y[2 * ds + df:]
            # Jacobian dg1/dx1 at (y0, 0)
            jac = np.empty((df, df))
            for j in range(df):
                xx[ds + j] = eps
                gp = force(xx)
                xx[ds + j] = -eps
                gm = force(xx)
                xx[ds + j] = 0.0
                jac[:, j] = (gp[ds:] - gm[ds:]) / (2.0 * eps)
            # g0(y0, g1(y0, 0) / omega^2)
            xx[ds:] = g_at[ds:] / (omega * omega)
            acc = force(xx)[:ds].copy()
            xx[ds:] = 0.0
            # B(z, conj z) = B(Re z, Re z) + B(Im z, Im z)
            for part in range(2):
                a = zr if part == 0 else zi
                na = np.sqrt(np.sum(a * a))
                if na > 0.0:
                    xx[ds:] = eps * a / na
                    gp = force(xx)
                    xx[ds:] = -eps * a / na
                    gm = force(xx)
                    xx[ds:] = 0.0
                    acc += na * na * (gp[:ds] - 2.0 * g_at[:ds] + gm[:ds]) / (eps * eps)
            k[st, :ds] = y[ds:2 * ds]
            k[st, ds:2 * ds] = acc
            k[st, 2 * ds:2 * ds + df] = jac @ zi / (2.0 * omega)
            k[st, 2 * ds + df:] = -(jac @ zr) / (2.0 * omega)
        x += dt / 6.0 * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3])
        if not np.all(np.isfinite(x)):
            return out[: step // stride + 1], step
        if (step + 1) % stride == 0:
            out[(step + 1) // stride] = x
    return out, n


def averaged_system_solve(system: OscillatorySystem, s0: State, T: float,
                          dt_avg: float = 0.05, fd_step: float = 1e-5,
                          stride: int = 1) -> list:
    """Integrate the averaged slow/envelope equations from a full state.

    Initial data: y0 = q0, y0' = p0, z1 = (q1 - i p1/omega) / 2.  Returns
    AveragedState samples every ``stride`` RK4 steps.
    """
    w = system.omega
    if not 0 < dt_avg <= T:
        raise ValueError("need 0 < dt_avg <= T")
    ds, df = system.d_slow, system.d_fast
    q0, q1 = system.split(s0.q)
    p0, p1 = system.split(s0.p)
    x = np.concatenate([q0, p0, 0.5 * q1, -0.5 * p1 / w]).astype(float)
    n = int(round(T / dt_avg))
    kernel = pick(averaged_rk4, system.force)
    samples, done = kernel(system.force, x, n, float(dt_avg), float(w), ds, df,
                           float(fd_step), int(stride))
    if done < n:
        raise NonFiniteState(f"averaged system blew up at RK4 step {done + 1}", step=done + 1)
    out = []
    for k, row in enumerate(samples):
        out.append(AveragedState(
            t=s0.t + k * stride * dt_avg,
            y0=row[:ds].copy(),
            y0dot=row[ds:2 * ds].copy(),
            z1=row[2 * ds:2 * ds + df] + 1j * row[2 * ds + df:],
        ))
    return out


def fast_block_jacobian(system: OscillatorySystem, y0, eps: float = 1e-5) -> np.ndarray:
    """dg1/dx1 at (y0, 0) by central differences."""
    x = np.concatenate([np.asarray(y0, dtype=float), np.zeros(system.d_fast)])

    def g1(x1):
        return system.split(system.force(np.concatenate([x[: system.d_slow], x1])))[1]

    return force_jacobian(g1, np.zeros(system.d_fast), eps)


def deviation_scale(system: OscillatorySystem, spec, h: float, y0_path,
                    invariant: float = 1.0) -> float:
    """Predicted envelope of |I - invariant| along a slow path.

    max_t sqrt(invariant/2) / omega * ||dg1/dx1(y0(t), 0)||_2 * (gamma/phi),
    where gamma/phi = 1 for the exact flow (``spec=None``).
    """
    factor = 1.0
    if spec is not None:
        factor = mfe_constants(spec, h, system.omega).gamma_over_phi
    best = 0.0
    for y0 in np.atleast_2d(np.asarray(y0_path, dtype=float)):
        jac = fast_block_jacobian(system, y0)
        best = max(best, float(np.linalg.norm(jac, 2)))
    return math.sqrt(invariant / 2.0) / system.omega * best * abs(factor)
