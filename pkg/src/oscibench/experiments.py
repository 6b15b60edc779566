"""Reproduction harness for the FPU experiments.

Every experiment is a set of independent grid points.  Each point builds
its own system, context and arrays, so points can run in a process pool;
results are sorted before they are returned, which makes the output
independent of the worker count.

Pseudo-methods accepted next to the registry names:

``REF``
    high-accuracy reference: sixth-order symmetric composition of the
    exact-linear-flow splitting (method B) with substeps h_ref * omega <= 0.05.
    ``reference_solution`` also uses compensated summation, because the FPU
    slow dynamics amplify rounding errors by ~1e7 over t in [0, 200].
``VV``
    plain velocity Verlet on the full force, no frequency map, so it is
    allowed to go unstable for h * omega > 2.  ``global_error_study`` runs
    ``SV`` this way.
"""

from __future__ import annotations

import json
import math
import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from ._accel import kernel_array, pick
from .diagnostics import max_deviation
from .filters import DomainError, get_method
from .integrator import NearResonance, make_context
from .systems import FPUParams, OscillatorySystem, State, fpu_initial_state, fpu_system

REF = "REF"
VV = "VV"
REF_H_OMEGA = 0.05
STATUSES = ("ok", "diverged", "domain_error")

# Yoshida's sixth-order symmetric composition, "solution A"
_Y6 = (0.784513610477560, 0.235573213359357, -1.17767998417887)
COMPOSITION = _Y6 + (1.0 - 2.0 * sum(_Y6),) + _Y6[::-1]


class ReferenceNotConverged(RuntimeError):
    """The reference integrator could not meet its accuracy target within budget."""


# --- row types -------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    method: str
    h: float
    omega: float
    h_omega_over_pi: float
    value: Optional[float]
    status: str

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        finite = self.value is not None and math.isfinite(self.value)
        if finite != (self.status == "ok"):
            raise ValueError("value must be finite exactly when status is 'ok'")

    def sort_key(self):
        return (self.method, self.h_omega_over_pi, self.h)


@dataclass(frozen=True)
class SeriesRow:
    t: float
    I_j: tuple
    I: float
    H: float

    @property
    def I1(self):
        return self.I_j[0]

    @property
    def I2(self):
        return self.I_j[1]

    @property
    def I3(self):
        return self.I_j[2]


@dataclass
class Series:
    """Sampled energies of one run; ``status`` is 'diverged' when truncated."""

    method: str
    omega: float
    h: float
    rows: list
    status: str = "ok"

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name):
        if name.startswith("I") and name[1:].isdigit():
            j = int(name[1:]) - 1
            return np.array([r.I_j[j] for r in self.rows])
        return np.array([getattr(r, name) for r in self.rows])


@dataclass(frozen=True)
class GlobalErrorRow:
    method: str
    h: float
    omega: float
    h_omega_over_pi: float
    err_x0: Optional[float]
    err_y0: Optional[float]
    status: str

    def sort_key(self):
        return (self.method, -self.h)


@dataclass(frozen=True)
class ReferenceSolution:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    h_ref: float
    richardson_defect: float

    def state(self, k):
        return State(self.q[k], self.p[k], self.t[k])


# --- step plans --------------------------------------------------------------

@dataclass
class _Plan:
    """Kernel inputs for one outer step of size h, made of ``substeps`` inner steps."""

    kind: str  # "trig" or "verlet"
    system: OscillatorySystem
    h: float
    substeps: int = 1
    tables: tuple = ()
    phiv: Optional[np.ndarray] = None
    om2v: np.ndarray = field(default=None)

    def initial_force(self, q):
        if self.kind == "trig":
            return np.asarray(self.system.force(self.phiv * q), dtype=float).copy()
        return np.asarray(self.system.force(q), dtype=float) - self.om2v * q

    def advance(self, q, p, g, n):
        """n outer steps in place; returns outer steps completed."""
        sys_ = self.system
        if self.kind == "trig":
            kern = pick(kernels.trig_advance, sys_.force)
            done = kern(sys_.force, q, p, g, n * self.substeps, *self.tables, self.phiv, True)
        else:
            kern = pick(kernels.verlet_advance, sys_.force)
            done = kern(sys_.force, q, p, g, n * self.substeps, self.h / self.substeps, self.om2v)
        return done // self.substeps

    def track(self, q, p, n, want_h):
        """Max |I - I0| and |H - H0| over every inner step; returns (dI, dH, completed)."""
        sys_ = self.system
        g = self.initial_force(q)
        if self.kind == "trig":
            kern = pick(kernels.trig_track, sys_.force, sys_.potential)
            di, dh, done = kern(sys_.force, sys_.potential, q, p, g, n * self.substeps,
                                *self.tables, self.phiv, self.om2v, sys_.d_slow, want_h)
        else:
            kern = pick(kernels.verlet_track, sys_.force, sys_.potential)
            di, dh, done = kern(sys_.force, sys_.potential, q, p, g, n * self.substeps,
                                self.h / self.substeps, self.om2v, sys_.d_slow, want_h)
        return di, dh, done // self.substeps


def _composition_tables(system, tau):
    """Stage tables (cos, drift, kick, half-kick, cos - 1) of one composition step."""
    parts = [make_context("B", system, c * tau).tables() for c in COMPOSITION]
    tables = [kernel_array(np.vstack([p[i] for p in parts])) for i in range(4)]
    cm1 = np.zeros_like(tables[0])
    for j, c in enumerate(COMPOSITION):
        # cos(x) - 1 = -2 sin^2(x/2) without cancellation
        cm1[j, system.d_slow:] = -2.0 * math.sin(0.5 * c * tau * system.omega) ** 2
    return tuple(tables) + (cm1,)


def reference_substeps(h, omega, h_omega_max=REF_H_OMEGA):
    return max(1, math.ceil(abs(h) * omega / h_omega_max - 1e-9))


def make_plan(method: str, system: OscillatorySystem, h: float) -> _Plan:
    """Raises DomainError / NearResonance for methods that cannot run at (h, omega)."""
    om2v = system.omega_vector() ** 2
    name = str(method).upper()
    if name == REF:
        m = reference_substeps(h, system.omega)
        return _Plan("trig", system, h, m, _composition_tables(system, h / m)[:4],
                     np.ones(system.dim), om2v)
    if name == VV:
        return _Plan("verlet", system, h, 1, (), None, om2v)
    ctx = make_context(method, system, h)
    return _Plan("trig", system, h, 1, tuple(kernel_array(t) for t in ctx.tables()),
                 kernel_array(ctx.phi_v), om2v)


# --- parallel map ------------------------------------------------------------

def warm_up():
    """Compile the kernels used by the harness once, before any fork."""
    system = fpu_system(FPUParams())
    s = fpu_initial_state(FPUParams())
    for method in ("IMEX", VV):
        plan = make_plan(method, system, 0.01)
        q, p = np.array(s.q), np.array(s.p)
        plan.track(q.copy(), p.copy(), 1, True)
        plan.advance(q, p, plan.initial_force(q), 1)


def _pool_map(fn, tasks, workers):
    tasks = list(tasks)
    workers = max(1, int(workers or 1))
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    warm_up()
    ctx = mp.get_context("fork")
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(workers, mp_context=ctx) as ex:
        return list(ex.map(fn, *zip(*tasks), chunksize=chunk))


def default_workers():
    return os.cpu_count() or 1


def default_grid(n=900, hi=4.5):
    """n uniform points k*hi/n, k = 1..n, in h*omega/pi."""
    if n < 1 or not hi > 0:
        raise ValueError("need n >= 1 and hi > 0")
    return [hi * k / n for k in range(1, n + 1)]


def _steps_for(T, h):
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T = {T} is not a multiple of h = {h}")
    return n


# --- resonance sweep -----------------------------------------------------------

QUANTITIES = ("omega_I", "total_H")


def sweep_point(method, h, x, T, quantity, ell=3) -> SweepRow:
    """Max deviation of omega*I (or H) for FPU at h*omega/pi = x."""
    omega = x * math.pi / h
    name = str(method).upper()
    row = dict(method=name, h=h, omega=omega, h_omega_over_pi=x)
    params = FPUParams(ell, omega)
    system = fpu_system(params)
    s0 = fpu_initial_state(params)
    n = _steps_for(T, h)
    try:
        plan = make_plan(name, system, h)
    except DomainError:
        return SweepRow(**row, value=None, status="domain_error")
    except NearResonance:
        return SweepRow(**row, value=None, status="diverged")
    want_h = quantity == "total_H"
    dev_i, dev_h, done = plan.track(np.array(s0.q), np.array(s0.p), n, want_h)
    value = dev_h if want_h else omega * dev_i
    if done < n or not math.isfinite(value):
        return SweepRow(**row, value=None, status="diverged")
    return SweepRow(**row, value=float(value), status="ok")


def resonance_sweep(methods: Sequence[str], h: float, grid: Sequence[float], T: float,
                    quantity: str = "omega_I", workers: int = 1, ell: int = 3) -> list:
    if quantity not in QUANTITIES:
        raise ValueError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    if any(not x > 0 for x in grid):
        raise ValueError("grid values must be positive")
    _steps_for(T, h)
    names = [_check_method(m) for m in methods]
    tasks = [(m, h, float(x), T, quantity, ell) for m in names for x in grid]
    rows = _pool_map(sweep_point, tasks, workers)
    return sorted(rows, key=SweepRow.sort_key)


def _check_method(name):
    upper = str(name).strip().upper()
    if upper in (REF, VV):
        return upper
    return get_method(upper).name


def _ratio_point(method, pair, x, T, ell):
    h1, h2 = pair
    fine = sweep_point(method, h1, x, T, "total_H", ell)
    coarse = sweep_point(method, h2, x, T, "total_H", ell)
    base = dict(method=fine.method, h=h1, omega=fine.omega, h_omega_over_pi=x)
    if fine.status != "ok" or coarse.status != "ok":
        bad = "domain_error" if "domain_error" in (fine.status, coarse.status) else "diverged"
        return SweepRow(**base, value=None, status=bad)
    if fine.value == coarse.value:
        return SweepRow(**base, value=0.0, status="ok")
    value = log2_ratio(coarse.value, fine.value)
    if not math.isfinite(value):
        return SweepRow(**base, value=None, status="diverged")
    return SweepRow(**base, value=value, status="ok")


def log2_ratio(coarse, fine):
    if coarse == fine:
        return 0.0
    if coarse <= 0 or fine <= 0:
        return math.nan
    return math.log2(coarse / fine)


def convergence_ratio(methods: Sequence[str], h_pairs=(0.02, 0.04), grid=None, T=200.0,
                      workers: int = 1, ell: int = 3) -> list:
    """log2(dev_H(h2) / dev_H(h1)) at equal h*omega (omega halves when h doubles)."""
    grid = default_grid() if grid is None else grid
    h1, h2 = h_pairs
    _steps_for(T, h1)
    _steps_for(T, h2)
    names = [_check_method(m) for m in methods]
    tasks = [(m, (h1, h2), float(x), T, ell) for m in names for x in grid]
    rows = _pool_map(_ratio_point, tasks, workers)
    return sorted(rows, key=SweepRow.sort_key)


# --- reference solution --------------------------------------------------------

def _run_reference(system, s0, times, level, h_omega_max):
    q = np.array(s0.q, dtype=float)
    p = np.array(s0.p, dtype=float)
    g = np.asarray(system.force(q), dtype=float).copy()
    cq = np.zeros_like(q)
    cp = np.zeros_like(p)
    kern = pick(kernels.compensated_advance, system.force)
    qs, ps = [], []
    cache = {}
    t_prev = s0.t
    for t in times:
        dt = t - t_prev
        if dt > 0:
            m = reference_substeps(dt, max(system.omega, 1.0), h_omega_max) * level
            key = (dt, m)
            if key not in cache:
                cos, drift, kick, half, cm1 = _composition_tables(system, dt / m)
                cache[key] = (cm1, drift, kick, half)
            done = kern(system.force, q, p, g, cq, cp, m, *cache[key])
            if done < m:
                raise ReferenceNotConverged(f"reference integration blew up near t = {t}")
        qs.append(q.copy())
        ps.append(p.copy())
        t_prev = t
    return np.array(qs), np.array(ps)


def reference_cost(system, T, h_omega_max=REF_H_OMEGA, level=1):
    """Composition steps (7 stages each) needed to reach T with substeps h*omega <= h_omega_max."""
    return int(math.ceil(T * max(system.omega, 1.0) / h_omega_max)) * level


def reference_solution(system: OscillatorySystem, s0: State, T: float, sample_times=None,
                       tol: float = 1e-7, h_omega_max: float = REF_H_OMEGA,
                       max_steps: int = 5_000_000, max_halvings: int = 3) -> ReferenceSolution:
    """High-accuracy trajectory sampled at ``sample_times`` (default: [t0, t0 + T]).

    Each sampling interval is split into equal substeps with h*omega <= 0.05;
    the run is repeated with halved substeps until the slow components move
    by at most ``tol`` relative to their largest magnitude (Richardson
    check).  The finer run is returned.  Refuses with a cost estimate when
    the runs would need more than ``max_steps`` composition steps in total.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if sample_times is None:
        sample_times = [s0.t, s0.t + T]
    times = np.asarray(sorted(float(t) for t in sample_times))
    if times.size == 0 or times[0] < s0.t or times[-1] > s0.t + T * (1 + 1e-12):
        raise ValueError("sample times must lie in [t0, t0 + T]")
    span = times[-1] - s0.t
    ds = system.d_slow
    spent = 0
    level = 1
    defect = math.inf
    coarse = None
    for _ in range(max_halvings + 2):
        cost = reference_cost(system, span, h_omega_max, level)
        if spent + cost > max_steps:
            _refuse(system, span, h_omega_max, level, max_steps)
        run = _run_reference(system, s0, times, level, h_omega_max)
        spent += cost
        if coarse is not None:
            slow_c = np.hstack([coarse[0][:, :ds], coarse[1][:, :ds]])
            slow_f = np.hstack([run[0][:, :ds], run[1][:, :ds]])
            scale = max(float(np.max(np.abs(slow_f))), 1e-300)
            defect = float(np.max(np.abs(slow_f - slow_c))) / scale
            if defect <= tol:
                h_ref = span / max(1, cost)
                return ReferenceSolution(times, run[0], run[1], h_ref, defect)
        coarse = run
        level *= 2
    raise ReferenceNotConverged(
        f"Richardson defect {defect:.2e} still above {tol:.0e} after {max_halvings} halvings")


def _refuse(system, span, h_omega_max, level, max_steps):
    steps = 3 * reference_cost(system, span, h_omega_max, level)
    # measured ~2.5 us per composition stage when compiled
    seconds = steps * len(COMPOSITION) * 2.5e-6
    raise ReferenceNotConverged(
        f"reference for omega = {system.omega:g}, T = {span:g} needs at least {steps:.1e} "
        f"composition steps (~{seconds / 3600:.1f} h); budget is {max_steps:.1e}")


# --- slow energy exchange ---------------------------------------------------------

def _series_row(system, t, q, p):
    w = system.omega
    q1 = q[system.d_slow:]
    p1 = p[system.d_slow:]
    i_j = 0.5 * p1 ** 2 + 0.5 * w ** 2 * q1 ** 2
    return SeriesRow(float(t), tuple(float(v) for v in i_j), float(np.sum(i_j)),
                     system.hamiltonian(q, p))


def exchange_series(method: str, omega: float, h: float, T: float, stride: int = 1,
                    ell: int = 3) -> Series:
    """I_j(t), I(t), H(t) every ``stride`` steps from the standard FPU state."""
    params = FPUParams(ell, omega)
    system = fpu_system(params)
    s0 = fpu_initial_state(params)
    name = _check_method(method)
    n = int(math.floor(T / h + 1e-9))
    if n < 1 or stride < 1:
        raise ValueError("need T >= h and stride >= 1")
    if name == REF:
        steps = list(range(0, n, stride)) + [n]
        times = [k * h for k in steps]
        ref = reference_solution(system, s0, T, times)
        rows = [_series_row(system, t, q, p) for t, q, p in zip(times, ref.q, ref.p)]
        return Series(name, omega, h, rows)
    try:
        plan = make_plan(name, system, h)
    except (DomainError, NearResonance):
        return Series(name, omega, h, [], "domain_error")
    q = np.array(s0.q, dtype=float)
    p = np.array(s0.p, dtype=float)
    g = plan.initial_force(q)
    rows = [_series_row(system, 0.0, q, p)]
    done = 0
    while done < n:
        chunk = min(stride, n - done)
        got = plan.advance(q, p, g, chunk)
        if got < chunk:
            return Series(name, omega, h, rows, "diverged")
        done += chunk
        rows.append(_series_row(system, done * h, q, p))
    return Series(name, omega, h, rows)


def crossing_time(t, first, second, window: float = 1.0) -> Optional[float]:
    """First time the running mean (over ``window``) of second - first turns positive.

    The running mean removes the O(1/omega) fast ripple so that a single
    noisy sample cannot trigger a crossing.  Returns None if it never does.
    """
    t = np.asarray(t, dtype=float)
    diff = np.asarray(second, dtype=float) - np.asarray(first, dtype=float)
    if t.size < 2:
        return None
    dt = t[1] - t[0]
    w = max(1, int(round(window / dt)))
    if w > 1 and diff.size >= w:
        diff = np.convolve(diff, np.ones(w) / w, mode="valid")
        t = t[w // 2: w // 2 + diff.size]
    hits = np.nonzero(diff > 0)[0]
    return float(t[hits[0]]) if hits.size else None


def series_crossing(series: Series, window: float = 1.0) -> Optional[float]:
    """Crossing time of I2 over I1 in a Series."""
    if len(series) < 2:
        return None
    return crossing_time(series.column("t"), series.column("I1"), series.column("I2"), window)


# --- global error -------------------------------------------------------------------

def _global_error_point(methods, omega, h, T, ell):
    params = FPUParams(ell, omega)
    system = fpu_system(params)
    s0 = fpu_initial_state(params)
    n = max(1, math.ceil(T / h - 1e-9))
    t_end = n * h
    ref = reference_solution(system, s0, t_end, [t_end])
    ds = system.d_slow
    x_ref, y_ref = ref.q[-1][:ds], ref.p[-1][:ds]
    rows = []
    for m in methods:
        base = dict(method=m, h=h, omega=omega, h_omega_over_pi=h * omega / math.pi)
        run_as = VV if m == "SV" else m
        try:
            plan = make_plan(run_as, system, h)
        except DomainError:
            rows.append(GlobalErrorRow(**base, err_x0=None, err_y0=None, status="domain_error"))
            continue
        except NearResonance:
            rows.append(GlobalErrorRow(**base, err_x0=None, err_y0=None, status="diverged"))
            continue
        q = np.array(s0.q, dtype=float)
        p = np.array(s0.p, dtype=float)
        if plan.advance(q, p, plan.initial_force(q), n) < n:
            rows.append(GlobalErrorRow(**base, err_x0=None, err_y0=None, status="diverged"))
            continue
        ex = float(np.linalg.norm(q[:ds] - x_ref))
        ey = float(np.linalg.norm(p[:ds] - y_ref))
        ok = math.isfinite(ex) and math.isfinite(ey)
        rows.append(GlobalErrorRow(**base, err_x0=ex if ok else None, err_y0=ey if ok else None,
                                   status="ok" if ok else "diverged"))
    return rows


def global_error_study(methods: Sequence[str], omega: float, h_grid: Sequence[float],
                       T: float = 1.0, workers: int = 1, ell: int = 3) -> list:
    """Slow position/momentum error at the first step with t >= T.

    ``SV`` runs as plain velocity Verlet so that its linear instability past
    h*omega = 2 shows up as a diverged row rather than a domain error.
    """
    h_grid = [float(h) for h in h_grid]
    if any(b > a for a, b in zip(h_grid, h_grid[1:])):
        raise ValueError("h grid must be descending")
    names = [_check_method(m) for m in methods]
    tasks = [(names, float(omega), h, T, ell) for h in h_grid]
    rows = [r for chunk in _pool_map(_global_error_point, tasks, workers) for r in chunk]
    return sorted(rows, key=GlobalErrorRow.sort_key)


def log_slope(x, y):
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


# --- manifest -----------------------------------------------------------------------

def status_counts(rows):
    counts = {s: 0 for s in STATUSES}
    for r in rows:
        status = r["status"] if isinstance(r, dict) else r.status
        counts[status] = counts.get(status, 0) + 1
    return counts


def write_manifest(path, experiment, parameters, rows, wall_time):
    info = {
        "experiment": experiment,
        "parameters": parameters,
        "rows": len(rows),
        "statuses": status_counts(rows),
        "wall_time_s": round(wall_time, 3),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest {path}: {exc}") from exc
    return info


def row_dict(row):
    d = asdict(row)
    if "I_j" in d:
        i_j = d.pop("I_j")
        out = {"t": d["t"]}
        out.update({f"I{j + 1}": v for j, v in enumerate(i_j)})
        out.update(I=d["I"], H=d["H"])
        return out
    return d
