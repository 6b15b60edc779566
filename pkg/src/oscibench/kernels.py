"""Hot loops: FPU force/potential and the stepping kernels.

Every function here is compiled by numba unless ``OSCIBENCH_NO_NUMBA`` is
set.  Force and potential callables are passed in as arguments; when they
are not compiled themselves, callers must use the ``.py_func`` variant (see
``_accel.pick``).

Stepping kernels work in place on ``q``, ``p`` and the cached force ``g``
and return the number of steps completed; anything short of ``n`` means the
state stopped being finite during the following step.
"""

import numpy as np

from ._accel import njit

# A state entry beyond this is treated as blown up: its energy would overflow.
BLOWUP = 1e150


@njit(cache=True)
def fpu_force(x):
    """Closed-form -grad U for the transformed FPU chain, x = (x0, x1)."""
    ell = x.shape[0] // 2
    x0 = x[:ell]
    x1 = x[ell:]
    d = np.empty(ell + 1)
    d[0] = x0[0] - x1[0]
    d[1:ell] = x0[1:] - x1[1:] - x0[:-1] - x1[:-1]
    d[ell] = x0[ell - 1] + x1[ell - 1]
    c = d * d * d
    sign = -np.ones(ell)
    sign[ell - 1] = 1.0
    g = np.empty(2 * ell)
    g[:ell] = -(c[:ell] + sign * c[1:])
    g[ell:] = c[:ell] - sign * c[1:]
    return g


@njit(cache=True)
def fpu_potential(x):
    ell = x.shape[0] // 2
    x0 = x[:ell]
    x1 = x[ell:]
    d = np.empty(ell + 1)
    d[0] = x0[0] - x1[0]
    d[1:ell] = x0[1:] - x1[1:] - x0[:-1] - x1[:-1]
    d[ell] = x0[ell - 1] + x1[ell - 1]
    return 0.25 * np.sum(d ** 4)


@njit(cache=True)
def zero_force(x):
    return np.zeros_like(x)


@njit(cache=True)
def zero_potential(x):
    return 0.0


@njit
def trig_advance(force, q, p, g, n, cosm, driftm, kickm, halfm, phiv, fsal):
    """Advance ``n`` steps of the symmetric one-step trigonometric scheme.

    Scalar tables have shape (stages, d); a plain method has one stage and
    a composition has several.  ``g`` must hold force(phiv * q) on entry
    when ``fsal`` is true; it holds the trailing force on exit.
    """
    for k in range(n):
        for j in range(cosm.shape[0]):
            if not fsal:
                g[:] = force(phiv * q)
            p += halfm[j] * g
            qn = cosm[j] * q + driftm[j] * p
            p[:] = kickm[j] * q + cosm[j] * p
            q[:] = qn
            g[:] = force(phiv * q)
            p += halfm[j] * g
        if not (np.all(np.abs(q) <= BLOWUP) and np.all(np.abs(p) <= BLOWUP)):
            return k
    return n


@njit
def trig_track(force, potential, q, p, g, n, cosm, driftm, kickm, halfm, phiv,
               om2v, d_slow, want_h):
    """trig_advance that records max |I - I0| and max |H - H0| after every step.

    Returns (dev_I, dev_H, steps_completed).  H is only evaluated when
    ``want_h`` is set since it costs a potential evaluation per step.
    """
    i0 = 0.5 * np.sum(p[d_slow:] ** 2 + om2v[d_slow:] * q[d_slow:] ** 2)
    h0 = 0.0
    if want_h:
        h0 = i0 + 0.5 * np.sum(p[:d_slow] ** 2) + potential(q)
    dev_i = 0.0
    dev_h = 0.0
    for k in range(n):
        for j in range(cosm.shape[0]):
            p += halfm[j] * g
            qn = cosm[j] * q + driftm[j] * p
            p[:] = kickm[j] * q + cosm[j] * p
            q[:] = qn
            g[:] = force(phiv * q)
            p += halfm[j] * g
        if not (np.all(np.abs(q) <= BLOWUP) and np.all(np.abs(p) <= BLOWUP)):
            return dev_i, dev_h, k
        ik = 0.5 * np.sum(p[d_slow:] ** 2 + om2v[d_slow:] * q[d_slow:] ** 2)
        dev_i = max(dev_i, abs(ik - i0))
        if want_h:
            hk = ik + 0.5 * np.sum(p[:d_slow] ** 2) + potential(q)
            dev_h = max(dev_h, abs(hk - h0))
    return dev_i, dev_h, n


@njit
def verlet_advance(force, q, p, f, n, h, om2v):
    """Velocity Verlet on q'' = -Omega^2 q + g(q); ``f`` caches the total force."""
    for k in range(n):
        p += 0.5 * h * f
        q += h * p
        f[:] = force(q) - om2v * q
        p += 0.5 * h * f
        if not (np.all(np.abs(q) <= BLOWUP) and np.all(np.abs(p) <= BLOWUP)):
            return k
    return n


@njit
def verlet_track(force, potential, q, p, f, n, h, om2v, d_slow, want_h):
    i0 = 0.5 * np.sum(p[d_slow:] ** 2 + om2v[d_slow:] * q[d_slow:] ** 2)
    h0 = 0.0
    if want_h:
        h0 = i0 + 0.5 * np.sum(p[:d_slow] ** 2) + potential(q)
    dev_i = 0.0
    dev_h = 0.0
    for k in range(n):
        p += 0.5 * h * f
        q += h * p
        f[:] = force(q) - om2v * q
        p += 0.5 * h * f
        if not (np.all(np.abs(q) <= BLOWUP) and np.all(np.abs(p) <= BLOWUP)):
            return dev_i, dev_h, k
        ik = 0.5 * np.sum(p[d_slow:] ** 2 + om2v[d_slow:] * q[d_slow:] ** 2)
        dev_i = max(dev_i, abs(ik - i0))
        if want_h:
            hk = ik + 0.5 * np.sum(p[:d_slow] ** 2) + potential(q)
            dev_h = max(dev_h, abs(hk - h0))
    return dev_i, dev_h, n


@njit
def compensated_advance(force, q, p, g, cq, cp, n, cm1m, driftm, kickm, halfm):
    """Reference stepping: kick-rotate-kick stages (phi = 1) in increment form
    with compensated (Kahan) summation of every update to q and p.

    ``cm1m`` holds cos(xi) - 1 so the rotation is an increment too; ``cq`` and
    ``cp`` carry the running compensation terms between calls.  ``g`` must
    hold force(q) on entry.  Roundoff then no longer grows with the step
    count, which matters when the slow dynamics amplify perturbations.
    """
    for k in range(n):
        for j in range(cm1m.shape[0]):
            y = halfm[j] * g - cp
            t = p + y
            cp[:] = (t - p) - y
            p[:] = t
            dq = cm1m[j] * q + driftm[j] * p
            dp = kickm[j] * q + cm1m[j] * p
            y = dq - cq
            t = q + y
            cq[:] = (t - q) - y
            q[:] = t
            y = dp - cp
            t = p + y
            cp[:] = (t - p) - y
            p[:] = t
            g[:] = force(q)
            y = halfm[j] * g - cp
            t = p + y
            cp[:] = (t - p) - y
            p[:] = t
        if not (np.all(np.abs(q) <= BLOWUP) and np.all(np.abs(p) <= BLOWUP)):
            return k
    return n
