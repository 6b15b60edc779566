"""Compiled vs plain-numpy kernel timings.

Each mode runs in a fresh interpreter because the JIT switch is read at
import time.  Run ``python -m oscibench.bench`` or ``oscibench bench``.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

CASES = ("IMEX", "G", "REF", "VV")


def _measure(steps):
    import numpy as np

    from . import _accel
    from .experiments import make_plan
    from .systems import FPUParams, fpu_initial_state, fpu_system

    params = FPUParams(3, 50.0)
    system = fpu_system(params)
    s0 = fpu_initial_state(params)
    out = {"jit": _accel.JIT_ENABLED, "steps": steps, "cases": {}}
    for name in CASES:
        plan = make_plan(name, system, 0.02)
        q, p = np.array(s0.q), np.array(s0.p)
        t0 = time.perf_counter()
        plan.advance(q, p, plan.initial_force(q), 1)
        first = time.perf_counter() - t0
        n = max(1, steps // plan.substeps) if name == "REF" else steps
        t0 = time.perf_counter()
        plan.advance(q, p, plan.initial_force(q), n)
        elapsed = time.perf_counter() - t0
        force_evals = n * plan.substeps * (len(plan.tables[0]) if plan.tables else 1)
        out["cases"][name] = {
            "first_call_s": first,
            "us_per_force_eval": 1e6 * elapsed / force_evals,
        }
    return out


def _child(no_numba, steps):
    env = dict(os.environ)
    env.pop("OSCIBENCH_NO_NUMBA", None)
    if no_numba:
        env["OSCIBENCH_NO_NUMBA"] = "1"
    cmd = [sys.executable, "-m", "oscibench.bench", "--child", str(steps)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def run_benchmark(steps=20000, stream=None):
    """Print a table of per-force-evaluation cost in both modes; returns the raw numbers."""
    stream = stream or sys.stdout
    jit = _child(False, steps)
    plain = _child(True, max(1, steps // 10))
    print(f"{'case':>6} {'numba us/eval':>14} {'numpy us/eval':>14} {'speedup':>8} "
          f"{'compile s':>10}", file=stream)
    for name in CASES:
        a = jit["cases"][name]["us_per_force_eval"]
        b = plain["cases"][name]["us_per_force_eval"]
        c = jit["cases"][name]["first_call_s"]
        print(f"{name:>6} {a:14.3f} {b:14.3f} {b / a:8.1f} {c:10.2f}", file=stream)
    return {"numba": jit, "numpy": plain}


if __name__ == "__main__":
    if len(sys.argv) >= 3 and sys.argv[1] == "--child":
        print(json.dumps(_measure(int(sys.argv[2]))))
    else:
        run_benchmark(int(sys.argv[1]) if len(sys.argv) > 1 else 20000)
