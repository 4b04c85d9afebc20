"""Command-line interface.

Subcommands: solve, sweep-h, sweep-dt, alpha, energy, verify.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 output/IO error.
"""

from __future__ import annotations

import argparse
import sys
import time

from .harness import (ConfigError, RunConfig, SweepError, config_from_sources,
                      emit_outputs, energy_study, parse_config_file, run_solve,
                      sweep_delta, sweep_h)
from .linalg import NotSPDError, SolverConvergenceError
from .manufactured import (CASE_IDS, AlphaSolveConfig, fixed_point_map,
                           make_case, solve_alpha, verify_case)
from .stepper import GuardTripError, SteppingError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--case", choices=CASE_IDS)
    parser.add_argument("--k", type=int, help="polynomial degree (1, 2 or 3)")
    parser.add_argument("--n", type=int, help="elements (1D) or cells per side (2D)")
    parser.add_argument("--delta", type=float, help="time step")
    parser.add_argument("--t-end", dest="t_end", type=float)
    parser.add_argument("--solver-tol", dest="solver_tol", type=float)
    parser.add_argument("--solver-method", dest="solver_method",
                        choices=["auto", "conjugate-gradient", "direct-banded"])
    parser.add_argument("--guard-floor", dest="guard_floor", type=float)
    parser.add_argument("--guard-ceiling", dest="guard_ceiling", type=float)
    parser.add_argument("--guard-policy", dest="guard_policy",
                        choices=["warn", "abort"])
    parser.add_argument("--out-dir", dest="out_dir")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nonlocfem",
        description="Finite element experiments for a parabolic equation "
                    "with an L2-norm nonlocal diffusion coefficient.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one case and report the error")
    _add_common(p_solve)
    p_solve.add_argument("--snapshots", help="comma-separated snapshot times")

    p_sh = sub.add_parser("sweep-h", help="mesh-refinement convergence study")
    _add_common(p_sh)
    p_sh.add_argument("--n-list", dest="n_list", required=True,
                      help="comma-separated mesh resolutions, e.g. 8,16,32,64")

    p_sd = sub.add_parser("sweep-dt", help="time-step convergence study")
    _add_common(p_sd)
    p_sd.add_argument("--delta-list", dest="delta_list", required=True,
                      help="comma-separated time steps, e.g. 0.1,0.05,0.025")

    p_alpha = sub.add_parser("alpha", help="solve the profile fixed point")
    p_alpha.add_argument("case", choices=CASE_IDS)
    p_alpha.add_argument("--tolerance", type=float, default=1e-13)

    p_energy = sub.add_parser("energy", help="energy time series for all cases")
    _add_common(p_energy)
    p_energy.add_argument("--cases", default=",".join(CASE_IDS),
                          help="comma-separated case ids")

    p_verify = sub.add_parser("verify", help="residual report for one case")
    p_verify.add_argument("case", choices=CASE_IDS)
    return parser


def _config_from_args(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else None
    keys = ("case", "k", "n", "delta", "t_end", "solver_tol", "solver_method",
            "guard_floor", "guard_ceiling", "guard_policy", "out_dir",
            "snapshots")
    overrides = {key: getattr(args, key) for key in keys if hasattr(args, key)}
    return config_from_sources(file_values, overrides)


def _parse_list(raw, conv):
    try:
        return [conv(part.strip()) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list value: {exc}") from exc


def _print_guard_summary(report):
    statuses = {}
    for _, _, status in report.coefficient_history:
        statuses[status] = statuses.get(status, 0) + 1
    summary = ", ".join(f"{status.value}: {count}"
                        for status, count in sorted(statuses.items(),
                                                    key=lambda kv: kv[0].value))
    print(f"guard log: {summary}")
    if report.first_guard_trip is not None:
        step, t, status = report.first_guard_trip
        print(f"first guard trip: {status.value} at step {step}, t = {t:.6g}")


def _cmd_solve(args) -> int:
    config = _config_from_args(args)
    report = run_solve(config)
    cfg = report.config
    print(f"case {cfg.case}: k={cfg.k} n={cfg.n} h={report.h:.6g} "
          f"delta={report.metadata['delta']:.6g} t_end={cfg.t_end:g}")
    print(f"L2 error at t_end: {report.final_error:.12e}")
    final_energy = report.energy_history[-1][1]
    print(f"final energy: {final_energy:.12e}")
    _print_guard_summary(report)
    paths = emit_outputs([report], cfg.out_dir)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(args, kind) -> int:
    config = _config_from_args(args)
    failure = None
    try:
        if kind == "h":
            result = sweep_h(config, _parse_list(args.n_list, int))
        else:
            result = sweep_delta(config, _parse_list(args.delta_list, float))
    except SweepError as exc:
        # keep the rows that did run; report the failure after writing them
        result = exc.partial
        failure = exc
    paths = emit_outputs([result], config.resolved().out_dir)
    label = "h" if kind == "h" else "delta"
    for row in result.rows:
        x = row.h if kind == "h" else row.delta
        err = "failed" if row.error_l2 is None else f"{row.error_l2:.6e}"
        rate = "" if row.pairwise_rate is None else f"  rate {row.pairwise_rate:.3f}"
        print(f"{label}={x:.6g}  error {err}{rate}")
    if result.fitted_slope is None:
        print("fitted slope: undefined (needs at least two nonzero errors)")
    else:
        print(f"fitted slope: {result.fitted_slope:.4f}")
    for path in paths:
        print(f"wrote {path}")
    if failure is not None:
        print(f"numerical failure: {failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_alpha(args) -> int:
    G, bracket = fixed_point_map(args.case)
    t0 = time.perf_counter()
    alpha = solve_alpha(G, AlphaSolveConfig(bracket=bracket,
                                            tolerance=args.tolerance))
    elapsed = time.perf_counter() - t0
    print(f"alpha({args.case}) = {alpha:.15f}")
    print(f"fixed-point residual: {abs(alpha - G(alpha)):.3e}")
    print(f"bracket: [{bracket[0]:g}, {bracket[1]:g}], "
          f"solve time: {elapsed * 1e3:.2f} ms")
    return EXIT_OK


def _cmd_energy(args) -> int:
    cases = _parse_list(args.cases, str)
    base = _config_from_args(args)
    configs = []
    for case in cases:
        if case not in CASE_IDS:
            raise ConfigError(f"unknown case {case!r}")
        configs.append(RunConfig(case=case, out_dir=base.out_dir,
                                 guard_floor=base.guard_floor,
                                 guard_ceiling=base.guard_ceiling,
                                 guard_policy=base.guard_policy,
                                 solver_tol=base.solver_tol))
    study = energy_study(configs)
    paths = emit_outputs([study], base.out_dir)
    for case in cases:
        energies = [e for c, _, e in study.rows if c == case]
        print(f"{case}: {len(energies)} samples, final energy "
              f"{energies[-1]:.6e}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    case = make_case(args.case)
    report = verify_case(case)
    print(f"case {args.case} (gamma={case.gamma:g}, alpha={case.alpha:.15f})")
    print(f"max strong-form residual: {report.max_pde_residual:.3e}")
    print(f"fixed-point residual:     {report.fixed_point_residual:.3e}")
    print(f"boundary trace max:       {report.boundary_max:.3e}")
    print(f"initial mass:             {report.initial_mass:.6f}")
    print(f"coefficient consistency:  {report.coefficient_consistency:.3e}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "sweep-h":
            return _cmd_sweep(args, "h")
        if args.command == "sweep-dt":
            return _cmd_sweep(args, "delta")
        if args.command == "alpha":
            return _cmd_alpha(args)
        if args.command == "energy":
            return _cmd_energy(args)
        if args.command == "verify":
            return _cmd_verify(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SweepError, GuardTripError, SteppingError, NotSPDError,
            SolverConvergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
