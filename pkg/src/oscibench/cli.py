"""Command-line frontend: ``oscibench <command> [flags]``.

Commands write ``<out>/<experiment>.csv``, a JSON manifest next to it and,
with ``--plot``, an SVG.  Any flag can also come from a JSON file passed via
``--config``; its keys mirror the long flag names (``full_scale`` or
``full-scale`` both work) and explicit flags win.

Exit codes: 0 success, 1 when every row diverged or fell outside a
method's domain, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import experiments as ex
from .filters import DomainError, get_method, trig_methods

DEFAULT_OUT = "results"


class UsageError(ValueError):
    pass


# --- CSV -----------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column names plus value kinds: str, float, optfloat, int or bool."""

    name: str
    columns: tuple

    @property
    def header(self):
        return [c for c, _ in self.columns]


def _schema(name, *cols):
    return CsvSchema(name, tuple(cols))


SWEEP_SCHEMA = _schema("sweep", ("method", "str"), ("h", "float"), ("omega", "float"),
                       ("h_omega_over_pi", "float"), ("value", "optfloat"), ("status", "str"))
GLOBAL_ERROR_SCHEMA = _schema("global_error", ("method", "str"), ("h", "float"),
                              ("omega", "float"), ("h_omega_over_pi", "float"),
                              ("err_x0", "optfloat"), ("err_y0", "optfloat"), ("status", "str"))
CONSTANTS_SCHEMA = _schema("constants", ("method", "str"), ("h", "float"), ("omega", "float"),
                           ("h_omega_tilde", "optfloat"), ("alpha", "optfloat"),
                           ("beta", "optfloat"), ("gamma", "optfloat"), ("rho", "optfloat"),
                           ("rho_tilde", "optfloat"), ("gamma_over_phi", "optfloat"),
                           ("resonant", "bool"), ("status", "str"))
STEP_SCHEMA = _schema("step", ("method", "str"), ("h", "float"), ("omega", "float"),
                      ("h_omega_over_pi", "float"), ("steps", "int"), ("t", "optfloat"),
                      ("H", "optfloat"), ("I", "optfloat"), ("status", "str"))


def series_schema(ell=3):
    cols = [("t", "float")] + [(f"I{j}", "float") for j in range(1, ell + 1)]
    return _schema("exchange", *cols, ("I", "float"), ("H", "float"))


def _fmt(value, kind):
    if kind == "optfloat" and value is None:
        return ""
    if kind in ("float", "optfloat"):
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "int":
        return str(int(value))
    return str(value)


def _parse(text, kind):
    if kind == "optfloat":
        return None if text == "" else float(text)
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        return text == "true"
    return text


def _as_dict(row):
    return row if isinstance(row, dict) else ex.row_dict(row)


def write_csv(path, rows, schema: CsvSchema):
    """Header plus one line per row; floats in shortest round-trip form, LF endings."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(schema.header)
            for row in rows:
                d = _as_dict(row)
                w.writerow([_fmt(d[c], k) for c, k in schema.columns])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
    return path


def read_csv(path, schema: CsvSchema):
    """Inverse of write_csv: a list of dicts with typed values."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header != schema.header:
                raise ValueError(f"{path}: header {header} does not match {schema.header}")
            return [{c: _parse(v, k) for (c, k), v in zip(schema.columns, line)} for line in r]
    except OSError as exc:
        raise OSError(f"cannot read CSV {path}: {exc}") from exc


# --- SVG -----------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#17becf", "#7f7f7f", "#bcbd22")


@dataclass(frozen=True)
class PlotSpec:
    title: str
    xlabel: str
    ylabel: str
    xlog: bool = False
    ylog: bool = False
    width: int = 720
    height: int = 440


def _ticks(lo, hi, log):
    if log:
        return [10.0 ** e for e in range(math.floor(lo), math.ceil(hi) + 1)
                if lo - 1e-9 <= e <= hi + 1e-9]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span)) if span > 0 else 1.0
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 8:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    return [first + k * step for k in range(int((hi - first) / step + 1e-9) + 1)]


def render_svg(path, series: dict, spec: PlotSpec):
    """One polyline per series label; None or non-positive (log axis) values break the line.

    ``series`` maps label -> (xs, ys).
    """
    def tr(v, log):
        return math.log10(v) if log else v

    def usable(x, y):
        return (x is not None and y is not None and math.isfinite(x) and math.isfinite(y)
                and (not spec.xlog or x > 0) and (not spec.ylog or y > 0))

    pts = [(tr(x, spec.xlog), tr(y, spec.ylog)) for xs, ys in series.values()
           for x, y in zip(xs, ys) if usable(x, y)]
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = 70, 130, 40, 50
    pw, ph = spec.width - left - right, spec.height - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
           f'height="{spec.height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
           f'<text x="{left + pw / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
           f'{_esc(spec.title)}</text>',
           f'<text x="{left + pw / 2:.1f}" y="{spec.height - 10}" text-anchor="middle">'
           f'{_esc(spec.xlabel)}</text>',
           f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 15 {top + ph / 2:.1f})">{_esc(spec.ylabel)}</text>']
    for t in _ticks(x0, x1, spec.xlog):
        v = tr(t, spec.xlog) if spec.xlog else t
        out.append(f'<line x1="{px(v):.1f}" y1="{top + ph}" x2="{px(v):.1f}" '
                   f'y2="{top + ph + 4}" stroke="#000"/>')
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1, spec.ylog):
        v = tr(t, spec.ylog) if spec.ylog else t
        out.append(f'<line x1="{left - 4}" y1="{py(v):.1f}" x2="{left}" y2="{py(v):.1f}" '
                   f'stroke="#000"/>')
        out.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{t:g}</text>')
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        run = []
        for x, y in list(zip(xs, ys)) + [(None, None)]:
            if usable(x, y):
                run.append(f"{px(tr(x, spec.xlog)):.2f},{py(tr(y, spec.ylog)):.2f}")
                continue
            if run:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                           f'points="{" ".join(run)}"/>')
            run = []
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}">{_esc(label)}</text>')
    out.append("</svg>")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SVG {path}: {exc}") from exc
    return path


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _by_method(rows, xkey, ykey):
    series = {}
    for r in rows:
        d = _as_dict(r)
        xs, ys = series.setdefault(d["method"], ([], []))
        xs.append(d[xkey])
        ys.append(d[ykey])
    return series


# --- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    experiment: str
    methods: tuple = ()
    omega: Optional[float] = None
    h: Optional[float] = None
    T: Optional[float] = None
    grid: Optional[tuple] = None
    quantity: str = "omega_I"
    stride: int = 1
    out: str = DEFAULT_OUT
    plot: bool = False
    workers: int = 1
    full_scale: bool = False
    steps: int = 1

    def __post_init__(self):
        for name in ("omega", "h", "T"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise UsageError(f"--{name} must be a positive number, got {v}")
        for name in ("stride", "workers", "steps"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name} must be >= 1, got {getattr(self, name)}")
        for m in self.methods:
            if m.upper() not in (ex.REF, ex.VV):
                try:
                    get_method(m)
                except KeyError as exc:
                    raise UsageError(f"--methods: {exc.args[0]}") from None
        if self.grid is not None:
            lo, hi, n = self.grid
            if not (lo >= 0 and hi > lo and n >= 1):
                raise UsageError(f"--grid must be lo:hi:n with 0 <= lo < hi and n >= 1, got {self.grid}")
        if self.quantity not in ex.QUANTITIES:
            raise UsageError(f"--quantity must be one of {', '.join(ex.QUANTITIES)}")


def parse_grid(text):
    try:
        lo, hi, n = str(text).split(":")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:n, got {text!r}") from None


def parse_methods(value):
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = str(value).split(",")
    return tuple(m.strip().upper() for m in items if str(m).strip())


def build_config(args) -> RunConfig:
    """Defaults < JSON config file < explicit flags."""
    merged = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError(f"--config {args.config}: expected a JSON object")
        merged.update({k.replace("-", "_"): v for k, v in data.items()})
    for key, value in vars(args).items():
        if key in ("config", "func", "command") or value is None:
            continue
        merged[key] = value
    known = set(RunConfig.__dataclass_fields__) | {"method"}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    methods = merged.pop("methods", None) or merged.pop("method", None)
    merged.pop("method", None)
    kwargs = dict(experiment=args.command, out=os.environ.get("OSCIBENCH_OUT", DEFAULT_OUT))
    if methods:
        kwargs["methods"] = parse_methods(methods)
    for key in ("omega", "h", "T"):
        if key in merged:
            kwargs[key] = _number(key, merged[key])
    if "grid" in merged:
        g = merged["grid"]
        kwargs["grid"] = parse_grid(g) if isinstance(g, str) else tuple(g)
    for key in ("stride", "workers", "steps"):
        if key in merged:
            kwargs[key] = int(_number(key, merged[key]))
    for key in ("quantity", "out"):
        if key in merged:
            kwargs[key] = str(merged[key])
    for key in ("plot", "full_scale"):
        if key in merged:
            kwargs[key] = bool(merged[key])
    return RunConfig(**kwargs)


def _number(key, value):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"--{key} expects a number, got {value!r}") from None


# --- commands --------------------------------------------------------------------

def _outputs(cfg, experiment):
    os.makedirs(cfg.out, exist_ok=True)
    base = os.path.join(cfg.out, experiment)
    return base + ".csv", base + ".svg", base + ".manifest.json"


def _finish(cfg, experiment, rows, schema, started, params, plot=None):
    csv_path, svg_path, manifest = _outputs(cfg, experiment)
    write_csv(csv_path, rows, schema)
    if cfg.plot and plot is not None:
        render_svg(svg_path, *plot)
    ex.write_manifest(manifest, experiment, params, rows, time.perf_counter() - started)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return _exit_code(rows)


def _exit_code(rows):
    if rows and not any(_as_dict(r).get("status", "ok") == "ok" for r in rows):
        return 1
    return 0


def _grid_points(grid):
    lo, hi, n = grid
    return [lo + (hi - lo) * k / n for k in range(1, n + 1)]


DEFAULT_METHODS = tuple(m.name for m in trig_methods() if m.name != "SV")


def cmd_sweep(cfg: RunConfig) -> int:
    h = cfg.h or 0.02
    T = cfg.T or (1000.0 if cfg.full_scale else 200.0)
    grid = cfg.grid or (0.0, 4.5, 900)
    methods = cfg.methods or DEFAULT_METHODS
    started = time.perf_counter()
    rows = ex.resonance_sweep(methods, h, _grid_points(grid), T, cfg.quantity, cfg.workers)
    label = "max deviation of omega*I" if cfg.quantity == "omega_I" else "max deviation of H"
    plot = (_by_method(rows, "h_omega_over_pi", "value"),
            PlotSpec(f"{label}, h = {h:g}, T = {T:g}", "h*omega/pi", label, ylog=True))
    params = dict(methods=list(methods), h=h, T=T, grid=list(grid), quantity=cfg.quantity)
    return _finish(cfg, "sweep", rows, SWEEP_SCHEMA, started, params, plot)


def cmd_convergence(cfg: RunConfig) -> int:
    h = cfg.h or 0.02
    T = cfg.T or (1000.0 if cfg.full_scale else 200.0)
    grid = cfg.grid or (0.0, 4.5, 900)
    methods = cfg.methods or DEFAULT_METHODS
    started = time.perf_counter()
    rows = ex.convergence_ratio(methods, (h, 2 * h), _grid_points(grid), T, cfg.workers)
    plot = (_by_method(rows, "h_omega_over_pi", "value"),
            PlotSpec(f"log2 ratio of max |H - H0|, h = {2 * h:g} vs {h:g}", "h*omega/pi",
                     "log2 ratio"))
    params = dict(methods=list(methods), h_pair=[h, 2 * h], T=T, grid=list(grid))
    return _finish(cfg, "convergence", rows, SWEEP_SCHEMA, started, params, plot)


def cmd_exchange(cfg: RunConfig) -> int:
    method = (cfg.methods or ("IMEX",))[0]
    omega = cfg.omega or 50.0
    h = cfg.h or 0.03
    T = cfg.T or (200.0 * omega / 50.0 if cfg.full_scale else 200.0)
    started = time.perf_counter()
    series = ex.exchange_series(method, omega, h, T, cfg.stride)
    rows = [ex.row_dict(r) for r in series.rows]
    schema = series_schema()
    t = [r["t"] for r in rows]
    plot = ({name: (t, [r[name] for r in rows]) for name in ("I1", "I2", "I3", "I")},
            PlotSpec(f"{method}: stiff energies, omega = {omega:g}, h = {h:g}", "t", "energy"))
    csv_path, svg_path, manifest = _outputs(cfg, "exchange")
    write_csv(csv_path, rows, schema)
    if cfg.plot:
        render_svg(svg_path, *plot)
    params = dict(method=method, omega=omega, h=h, T=T, stride=cfg.stride,
                  status=series.status, crossing_time=ex.series_crossing(series))
    ex.write_manifest(manifest, "exchange", params, [], time.perf_counter() - started)
    print(f"wrote {csv_path} ({len(rows)} rows, status {series.status})")
    return 0 if series.status == "ok" else 1


def cmd_global_error(cfg: RunConfig) -> int:
    omega = cfg.omega or 1000.0
    T = cfg.T or 1.0
    lo, hi, n = cfg.grid or (2e-4, 5e-2, 60)
    if lo <= 0:
        raise UsageError("--grid for global-error needs lo > 0 (step sizes)")
    h_grid = sorted({float(f"{lo * (hi / lo) ** (k / max(1, n - 1)):.6g}") for k in range(n)},
                    reverse=True)
    methods = cfg.methods or (DEFAULT_METHODS + ("SV",))
    started = time.perf_counter()
    rows = ex.global_error_study(methods, omega, h_grid, T, cfg.workers)
    plot = (_by_method(rows, "h", "err_x0"),
            PlotSpec(f"slow position error at first step after t = {T:g}, omega = {omega:g}",
                     "h", "|x0 - x0_ref|", xlog=True, ylog=True))
    params = dict(methods=list(methods), omega=omega, T=T, h_grid=h_grid)
    return _finish(cfg, "global_error", rows, GLOBAL_ERROR_SCHEMA, started, params, plot)


def constants_row(method, h, omega):
    from .diagnostics import mfe_constants

    base = dict(method=method, h=h, omega=omega)
    try:
        c = mfe_constants(method, h, omega)
    except DomainError:
        return dict(base, h_omega_tilde=None, alpha=None, beta=None, gamma=None, rho=None,
                    rho_tilde=None, gamma_over_phi=None, resonant=False, status="domain_error")

    def fin(v):
        return v if math.isfinite(v) else None

    return dict(base, h_omega_tilde=c.h_omega_tilde, alpha=fin(c.alpha), beta=fin(c.beta),
                gamma=fin(c.gamma), rho=fin(c.rho), rho_tilde=fin(c.rho_tilde),
                gamma_over_phi=fin(c.gamma_over_phi), resonant=c.resonant,
                status="ok")


def cmd_constants(cfg: RunConfig) -> int:
    h = cfg.h or 0.1
    omega = cfg.omega or 50.0
    methods = cfg.methods or tuple(m.name for m in trig_methods())
    started = time.perf_counter()
    rows = [constants_row(m, h, omega) for m in methods]
    for r in rows:
        if r["status"] == "domain_error":
            print(f"{r['method']:>5}  outside the frequency map's domain at h*omega = {h * omega:g}")
            continue
        vals = "  ".join(f"{k} = {_show(r[k])}" for k in ("alpha", "beta", "gamma", "rho",
                                                         "rho_tilde", "gamma_over_phi"))
        flag = "  (resonant)" if r["resonant"] else ""
        print(f"{r['method']:>5}  {vals}{flag}")
    return _finish(cfg, "constants", rows, CONSTANTS_SCHEMA, started,
                   dict(methods=list(methods), h=h, omega=omega))


def _show(v):
    return "inf" if v is None else f"{v:.12g}"


def step_row(method, h, omega, steps):
    from .diagnostics import energies
    from .integrator import NearResonance, NoConvergence, implicit_midpoint_step
    from .systems import FPUParams, State, fpu_initial_state, fpu_system

    params = FPUParams(3, omega)
    system = fpu_system(params)
    s = fpu_initial_state(params)
    base = dict(method=method, h=h, omega=omega, h_omega_over_pi=h * omega / math.pi, steps=steps)
    empty = dict(base, t=None, H=None, I=None)
    if method == "MIDPOINT":
        try:
            for _ in range(steps):
                s = implicit_midpoint_step(system, h, s)
        except NoConvergence:
            return dict(empty, status="diverged")
    else:
        try:
            plan = ex.make_plan(method, system, h)
        except DomainError:
            return dict(empty, status="domain_error")
        except NearResonance:
            return dict(empty, status="diverged")
        q, p = s.q.copy(), s.p.copy()
        if plan.advance(q, p, plan.initial_force(q), steps) < steps:
            return dict(empty, status="diverged")
        s = State(q, p, steps * h)
    rep = energies(system, None, h, s)
    return dict(base, t=s.t, H=rep.H, I=rep.I, status="ok")


def cmd_step(cfg: RunConfig) -> int:
    h = cfg.h or 0.02
    omega = cfg.omega or 50.0
    methods = cfg.methods or ("IMEX",)
    started = time.perf_counter()
    rows = [step_row(m, h, omega, cfg.steps) for m in methods]
    for r in rows:
        print(f"{r['method']:>8}  status = {r['status']}  H = {_show(r['H']) if r['H'] is not None else '-'}")
    return _finish(cfg, "step", rows, STEP_SCHEMA, started,
                   dict(methods=list(methods), h=h, omega=omega, steps=cfg.steps))


def cmd_bench(cfg: RunConfig) -> int:
    from .bench import run_benchmark

    run_benchmark(steps=cfg.steps if cfg.steps > 1 else 20000)
    return 0


COMMANDS = {
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
    "exchange": cmd_exchange,
    "global-error": cmd_global_error,
    "constants": cmd_constants,
    "step": cmd_step,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="oscibench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with the same keys as the flags")
        p.add_argument("--method", "--methods", dest="methods",
                       help="comma-separated method names (REF and VV also accepted)")
        p.add_argument("--h", type=float)
        p.add_argument("--omega", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--grid", help="lo:hi:n")
        p.add_argument("--quantity", choices=ex.QUANTITIES)
        p.add_argument("--stride", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--out", help="output directory (default $OSCIBENCH_OUT or ./results)")
        p.add_argument("--plot", action="store_true", default=None)
        p.add_argument("--workers", type=int)
        p.add_argument("--full-scale", dest="full_scale", action="store_true", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"oscibench {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
