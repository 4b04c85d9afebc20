"""Experiment harness: single solves, h- and delta-sweeps, energy studies.

Configuration is a flat key=value text file plus command-line overrides
(flags win). Results are written as CSV tables with fixed schemas and
self-contained SVG line charts; identical configurations produce
byte-identical files. A .meta.txt sidecar records the ladder and
quadrature choices behind each table.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import assembly_degree, error_degree, l2_error
from .coefficient import DEFAULT_CEILING, DEFAULT_FLOOR, NonlocalCoefficient
from .linalg import CG, DIRECT_BANDED, SolverConfig
from .manufactured import CASE_IDS, make_case
from .mesh import build_lagrange_space, uniform_interval_mesh, uniform_square_mesh
from .stepper import WARN, TimeGrid, run

SWEEP_HEADER = "case,k,h,delta,t_end,error_l2,pairwise_rate"
ENERGY_HEADER = "case,t,energy,log_energy"

# resolution / step defaults per case, following the reference experiments
_CASE_DEFAULTS = {
    "example1": dict(k=2, n=100, delta=1e-3, t_end=10.0),
    "example2": dict(k=2, n=100, delta=1e-3, t_end=2.0),
    "example3": dict(k=3, n=16, delta=1e-2, t_end=1.0),
}

_CONFIG_KEYS = ("case", "dim", "k", "n", "delta", "t_end", "solver_tol",
                "solver_method", "guard_floor", "guard_ceiling",
                "guard_policy", "out_dir", "snapshots")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class SweepError(RuntimeError):
    """One or more sweep rows failed; partial results are attached."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass
class RunConfig:
    """One solve: discretization, guards, solver, and output settings."""

    case: str = "example1"
    dim: int | None = None
    k: int | None = None
    n: int | None = None
    delta: float | None = None
    t_end: float | None = None
    solver_tol: float = 1e-12
    solver_method: str = "auto"
    guard_floor: float = DEFAULT_FLOOR
    guard_ceiling: float = DEFAULT_CEILING
    guard_policy: str = WARN
    out_dir: str = "out"
    snapshots: tuple = ()

    def resolved(self) -> "RunConfig":
        """Fill unset fields from the case defaults and validate."""
        if self.case not in CASE_IDS:
            raise ConfigError(f"unknown case {self.case!r}; expected one of "
                              f"{', '.join(CASE_IDS)}")
        defaults = _CASE_DEFAULTS[self.case]
        case_dim = make_case(self.case).dim
        cfg = replace(
            self,
            dim=case_dim if self.dim is None else self.dim,
            k=defaults["k"] if self.k is None else self.k,
            n=defaults["n"] if self.n is None else self.n,
            delta=defaults["delta"] if self.delta is None else self.delta,
            t_end=defaults["t_end"] if self.t_end is None else self.t_end,
        )
        if cfg.dim != case_dim:
            raise ConfigError(f"case {cfg.case} is {case_dim}D, config says "
                              f"dim={cfg.dim}")
        if cfg.k not in (1, 2, 3):
            raise ConfigError(f"polynomial degree must be 1, 2 or 3, got {cfg.k}")
        for name in ("n", "delta", "t_end", "solver_tol", "guard_floor",
                     "guard_ceiling"):
            value = getattr(cfg, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if cfg.guard_policy not in ("warn", "abort"):
            raise ConfigError(f"guard_policy must be warn or abort, "
                              f"got {cfg.guard_policy!r}")
        if cfg.solver_method not in ("auto", CG, DIRECT_BANDED):
            raise ConfigError(f"unknown solver_method {cfg.solver_method!r}")
        return cfg


def parse_config_file(path: str) -> dict:
    """Read a flat key = value file; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                                  f"got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def config_from_sources(file_values: dict | None = None,
                        overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from file values and CLI overrides (overrides win)."""
    merged: dict = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if value is not None:
                merged[key] = value
    kwargs: dict = {}
    converters = {
        "case": str, "dim": int, "k": int, "n": int, "delta": float,
        "t_end": float, "solver_tol": float, "solver_method": str,
        "guard_floor": float, "guard_ceiling": float, "guard_policy": str,
        "out_dir": str,
    }
    try:
        for key, conv in converters.items():
            if key in merged:
                kwargs[key] = conv(merged[key])
        if "snapshots" in merged:
            raw = merged["snapshots"]
            if isinstance(raw, str):
                parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
                kwargs["snapshots"] = tuple(float(p) for p in parts)
            else:
                kwargs["snapshots"] = tuple(float(v) for v in raw)
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return RunConfig(**kwargs)


@dataclass
class RunReport:
    """Outcome of one solve against a manufactured case."""

    config: RunConfig
    h: float
    final_error: float
    energy_history: list
    coefficient_history: list
    first_guard_trip: tuple | None
    snapshots: dict
    metadata: dict


@dataclass
class SweepRow:
    k: int
    h: float
    delta: float
    t_end: float
    error_l2: float | None
    pairwise_rate: float | None
    note: str = ""


@dataclass
class SweepResult:
    case: str
    kind: str            # "h" or "delta"
    k: int
    rows: list
    fitted_slope: float | None
    metadata: dict = field(default_factory=dict)


@dataclass
class EnergyStudy:
    rows: list           # (case, t, energy)
    metadata: dict = field(default_factory=dict)


def _build_space(config: RunConfig):
    if config.dim == 1:
        mesh = uniform_interval_mesh(0.0, 1.0, config.n)
    else:
        mesh = uniform_square_mesh(config.n)
    return build_lagrange_space(mesh, config.k)


def _solver_config(config: RunConfig) -> SolverConfig:
    method = config.solver_method
    if method == "auto":
        method = DIRECT_BANDED if config.dim == 1 else CG
    return SolverConfig(tolerance=config.solver_tol, method=method)


def _metadata(config: RunConfig, grid: TimeGrid) -> dict:
    return {
        "case": config.case,
        "k": config.k,
        "n": config.n,
        "delta": grid.delta,
        "t_end": grid.t_end,
        "assembly_quadrature_degree": assembly_degree(config.k),
        "error_quadrature_degree": error_degree(config.dim, config.k),
        "solver_method": _solver_config(config).method,
        "solver_tol": config.solver_tol,
        "guard_floor": config.guard_floor,
        "guard_ceiling": config.guard_ceiling,
        "guard_policy": config.guard_policy,
    }


def run_solve(config: RunConfig) -> RunReport:
    """Run one case to t_end and measure the final L2 error."""
    config = config.resolved()
    case = make_case(config.case)
    space = _build_space(config)
    n_steps = max(1, round(config.t_end / config.delta))
    grid = TimeGrid(t_end=config.t_end, n_steps=n_steps)
    coeff = NonlocalCoefficient(gamma=case.gamma, floor_m=config.guard_floor,
                                ceil_M=config.guard_ceiling)
    traj = run(space, case.u0, case.f, coeff, grid,
               solver_config=_solver_config(config),
               guard_policy=config.guard_policy,
               snapshot_times=config.snapshots)
    final_error = l2_error(traj.final, case.u, grid.t_end)
    return RunReport(config=config, h=space.mesh.h, final_error=final_error,
                     energy_history=traj.energy_history,
                     coefficient_history=traj.coefficient_history,
                     first_guard_trip=traj.first_guard_trip,
                     snapshots=traj.snapshots,
                     metadata=_metadata(config, grid))


def _fit_slope(xs, errors) -> float | None:
    pts = [(x, e) for x, e in zip(xs, errors) if e is not None and e > 0.0]
    if len(pts) < 2:
        return None
    lx = np.log([p[0] for p in pts])
    le = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, le, 1)[0])


def _pairwise_rates(errors):
    rates = [None]
    for prev, cur in zip(errors, errors[1:]):
        if prev is None or cur is None or prev <= 0.0 or cur <= 0.0:
            rates.append(None)
        else:
            rates.append(math.log2(prev / cur))
    return rates


def _sweep(config: RunConfig, kind: str, values) -> SweepResult:
    config = config.resolved()
    rows = []
    errors = []
    xs = []
    failures = []
    cell = 1.0 if config.dim == 1 else math.sqrt(2.0)
    for value in values:
        if kind == "h":
            row_cfg = replace(config, n=int(value))
            h, delta = cell / int(value), config.delta
        else:
            row_cfg = replace(config, delta=float(value))
            h, delta = cell / config.n, float(value)
        try:
            report = run_solve(row_cfg)
            err: float | None = report.final_error
            note = ""
            h, delta = report.h, report.metadata["delta"]
        except Exception as exc:  # keep remaining rows; re-raise at the end
            err, note = None, f"failed: {exc}"
            failures.append((value, exc))
        rows.append(SweepRow(k=config.k, h=h, delta=delta, t_end=config.t_end,
                             error_l2=err, pairwise_rate=None, note=note))
        errors.append(err)
        xs.append(h if kind == "h" else delta)
    for row, rate in zip(rows, _pairwise_rates(errors)):
        row.pairwise_rate = rate
    meta = {
        "case": config.case,
        "k": config.k,
        "t_end": config.t_end,
        "sweep": kind,
        "ladder": list(values),
        "fixed_n" if kind == "delta" else "fixed_delta":
            config.n if kind == "delta" else config.delta,
        "assembly_quadrature_degree": assembly_degree(config.k),
        "error_quadrature_degree": error_degree(config.dim, config.k),
        "solver_method": _solver_config(config).method,
        "solver_tol": config.solver_tol,
    }
    result = SweepResult(case=config.case, kind=kind, k=config.k, rows=rows,
                         fitted_slope=_fit_slope(xs, errors), metadata=meta)
    if failures:
        raise SweepError(f"{len(failures)} of {len(values)} sweep rows failed "
                         f"(first: {failures[0][1]})", result)
    return result


def sweep_h(config: RunConfig, n_values) -> SweepResult:
    """Errors at t_end over a mesh ladder (n ascending = h descending)."""
    return _sweep(config, "h", list(n_values))


def sweep_delta(config: RunConfig, delta_values) -> SweepResult:
    """Errors at t_end over a time-step ladder (delta descending)."""
    return _sweep(config, "delta", list(delta_values))


def energy_study(configs) -> EnergyStudy:
    """Per-step energy time series for several cases in one table."""
    rows = []
    meta: dict = {}
    for config in configs:
        report = run_solve(config)
        for t, energy in report.energy_history:
            rows.append((config.resolved().case, t, energy))
        meta[f"{config.resolved().case}"] = report.metadata
    return EnergyStudy(rows=rows, metadata=meta)


# ---------------------------------------------------------------------------
# output emission


def _fmt(value) -> str:
    return format(float(value), ".17g")


def _write_text(path: str, text: str):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def sweep_csv(result: SweepResult) -> str:
    lines = [SWEEP_HEADER]
    for row in result.rows:
        err = "" if row.error_l2 is None else _fmt(row.error_l2)
        rate = "" if row.pairwise_rate is None else _fmt(row.pairwise_rate)
        lines.append(",".join([result.case, str(row.k), _fmt(row.h),
                               _fmt(row.delta), _fmt(row.t_end), err, rate]))
    return "\n".join(lines) + "\n"


def energy_csv(study: EnergyStudy) -> str:
    lines = [ENERGY_HEADER]
    for case, t, energy in study.rows:
        log_e = "-inf" if energy <= 0.0 else _fmt(math.log(energy))
        lines.append(",".join([case, _fmt(t), _fmt(energy), log_e]))
    return "\n".join(lines) + "\n"


def run_energy_csv(report: RunReport) -> str:
    study = EnergyStudy(rows=[(report.config.case, t, e)
                              for t, e in report.energy_history])
    return energy_csv(study)


def meta_text(metadata: dict) -> str:
    lines = [f"{key} = {metadata[key]}" for key in sorted(metadata)]
    return "\n".join(lines) + "\n"


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg_chart(path: str, title: str, xlabel: str, ylabel: str, series):
    """Self-contained SVG line chart; both axes carry log10-transformed data.

    series: list of (label, xs, ys) with xs/ys already log10-scaled.
    Deterministic output: fixed canvas, palette, and float formatting.
    """
    width, height = 640, 480
    ml, mr, mt, mb = 72, 24, 36, 56
    finite = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys)
              if math.isfinite(x) and math.isfinite(y)]
    if finite:
        x0 = min(x for x, _ in finite)
        x1 = max(x for x, _ in finite)
        y0 = min(y for _, y in finite)
        y1 = max(y for _, y in finite)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
        f'y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
        f'stroke="black"/>',
        f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 12}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">'
        f'{xlabel}</text>',
        f'<text x="16" y="{(mt + height - mb) / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})">'
        f'{ylabel}</text>',
    ]
    for tick in range(math.ceil(x0 - 1e-9), math.floor(x1 + 1e-9) + 1):
        x = px(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{height - mb}" x2="{x:.2f}" '
                     f'y2="{height - mb + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{height - mb + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{tick}</text>')
    for tick in range(math.ceil(y0 - 1e-9), math.floor(y1 + 1e-9) + 1):
        y = py(tick)
        parts.append(f'<line x1="{ml - 5}" y1="{y:.2f}" x2="{ml}" '
                     f'y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{tick}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(xs, ys)
               if math.isfinite(x) and math.isfinite(y)]
        if pts:
            d = "M " + " L ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            parts.append(f'<path d="{d}" fill="none" stroke="{color}" '
                         f'stroke-width="1.5"/>')
            for x, y in pts:
                parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" '
                             f'fill="{color}"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{width - mr - 130}" y1="{ly - 4}" '
                     f'x2="{width - mr - 110}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - mr - 104}" y="{ly}" '
                     f'font-family="sans-serif" font-size="11">{label}</text>')
    parts.append("</svg>")
    _write_text(path, "\n".join(parts) + "\n")


def _log10_or_none(v):
    return math.log10(v) if v is not None and v > 0.0 else None


def emit_outputs(results, out_dir: str) -> list[str]:
    """Write CSV, SVG, and metadata files for each result; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name, text):
        path = os.path.join(out_dir, name)
        _write_text(path, text)
        written.append(path)
        return path

    for result in results:
        if isinstance(result, SweepResult):
            tag = "h" if result.kind == "h" else "dt"
            base = f"sweep_{tag}_{result.case}_k{result.k}"
            emit(base + ".csv", sweep_csv(result))
            meta = dict(result.metadata)
            if result.fitted_slope is not None:
                meta["fitted_slope"] = result.fitted_slope
            emit(base + ".meta.txt", meta_text(meta))
            xs, ys = [], []
            for row in result.rows:
                x = row.h if result.kind == "h" else row.delta
                if row.error_l2 is not None and row.error_l2 > 0.0:
                    xs.append(math.log10(x))
                    ys.append(math.log10(row.error_l2))
            xlab = "log10(h)" if result.kind == "h" else "log10(delta)"
            svg = os.path.join(out_dir, base + ".svg")
            write_svg_chart(svg, f"{result.case} {tag}-sweep, k={result.k}",
                            xlab, "log10(L2 error)",
                            [(f"k={result.k}", xs, ys)])
            written.append(svg)
        elif isinstance(result, EnergyStudy):
            base = "energy_study"
            emit(base + ".csv", energy_csv(result))
            if result.metadata:
                emit(base + ".meta.txt",
                     meta_text({k: v for k, v in sorted(result.metadata.items())}))
            series = []
            cases = sorted({case for case, _, _ in result.rows})
            for case in cases:
                xs = [t for c, t, e in result.rows if c == case]
                ys = [math.log10(e) if e > 0 else math.nan
                      for c, t, e in result.rows if c == case]
                series.append((case, xs, ys))
            svg = os.path.join(out_dir, base + ".svg")
            write_svg_chart(svg, "energy vs time", "t", "log10(energy)", series)
            written.append(svg)
        elif isinstance(result, RunReport):
            base = f"run_{result.config.case}_k{result.config.k}"
            emit(base + ".csv", run_energy_csv(result))
            meta = dict(result.metadata)
            meta["final_error_l2"] = result.final_error
            if result.first_guard_trip is not None:
                step, t, status = result.first_guard_trip
                meta["first_guard_trip"] = f"step {step} t={t:.6g} {status.value}"
            emit(base + ".meta.txt", meta_text(meta))
            for t_req, (t_grid, field_vec) in sorted(result.snapshots.items()):
                coords = field_vec.space.nodes
                lines = ["x,u" if coords.shape[1] == 1 else "x,y,u"]
                order = np.lexsort(tuple(coords[:, d]
                                         for d in range(coords.shape[1] - 1, -1, -1)))
                for idx in order:
                    row = [_fmt(c) for c in coords[idx]]
                    row.append(_fmt(field_vec.coefficients[idx]))
                    lines.append(",".join(row))
                emit(f"{base}_snapshot_t{t_req:g}.csv", "\n".join(lines) + "\n")
        else:
            raise TypeError(f"cannot emit {type(result).__name__}")
    return written
