"""Command-line front end (``hjbmp``).

Exit codes: 0 success, 1 assumption failure, 2 parse or usage error,
3 basis cap exceeded, 4 finite escape, 5 other numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import convergence_time, estimate_contraction_rate
from .errors import (AssumptionError, BasisLimitError, DegenerateInstanceError, DomainError,
                     FiniteEscapeError, HJBMaxPlusError, NumericalFailure, UsageError)
from .io import (atomic_write_text, bundled_instance, csv_text, load_instance, load_value,
                 save_value)
from .problem import derive_constants
from .propagation import PRUNE_RULES, MaxPlusValue, PruneConfig, solve
from .report import GridSpec
from .riccati import INTEGRATORS, FlowConfig

EXIT_OK, EXIT_ASSUMPTION, EXIT_USAGE, EXIT_BASIS, EXIT_ESCAPE, EXIT_NUMERIC = range(6)

REPORT_HEADER = ("iteration", "T", "basis_size", "pruned", "residual")
RESIDUAL_HEADER = ("iteration", "T", "basis_size", "residual")
CONVERGENCE_HEADER = ("tau", "neg_log_tau", "T_star")
ERROR_HEADER = ("tau", "error", "log_tau", "log_error")

BUNDLED = ("scalar", "standard_2d")

log = logging.getLogger("hjbmaxplus")


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive real, got {text!r}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {v}")
    return v


def _tau_list(text):
    try:
        taus = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tau list {text!r}") from None
    if not taus or not all(t > 0 and math.isfinite(t) for t in taus):
        raise argparse.ArgumentTypeError("tau list needs positive reals")
    return taus


def _default_threads():
    env = os.environ.get("HJBMP_THREADS")
    if env is None:
        return None
    try:
        return max(1, int(env))
    except ValueError:
        return None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hjbmp",
        description="Max-plus solver for switching linear-quadratic HJB equations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("instance",
                        help="instance JSON file, or a bundled name (scalar, standard_2d)")
        sp.add_argument("--lambda", dest="lam", type=_positive_float,
                        help="upper end of the invariant interval (default: midpoint)")
        sp.add_argument("--unchecked", action="store_true",
                        help="run even if the standing assumptions fail")
        sp.add_argument("-v", "--verbose", action="store_true")

    def solving(sp, needs_tau=True):
        if needs_tau:
            sp.add_argument("--tau", type=_positive_float, required=True, help="time step")
            sp.add_argument("--steps", type=_nonneg_int, required=True, help="iterations N")
        sp.add_argument("--prune", choices=PRUNE_RULES, default="thompson")
        sp.add_argument("--prune-order", type=float, default=2.0, help="r (> 1)")
        sp.add_argument("--prune-const", type=_positive_float, default=1.0, help="L")
        sp.add_argument("--v0", default="eps", help="eps, lambda, or a value JSON file")
        sp.add_argument("--grid-lo", type=float, default=-2.0)
        sp.add_argument("--grid-hi", type=float, default=2.0)
        sp.add_argument("--grid-points", type=_nonneg_int, default=41)
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=_nonneg_int, default=_default_threads(),
                        help="worker threads (default: $HJBMP_THREADS or 1)")
        sp.add_argument("--substeps", type=_nonneg_int, default=1000,
                        help="RK4 substeps per unit time")
        sp.add_argument("--integrator", choices=INTEGRATORS, default="rk4")
        sp.add_argument("--basis-cap", type=_nonneg_int, default=200_000)

    sp = sub.add_parser("check", help="derive constants and test the assumptions")
    common(sp)

    sp = sub.add_parser("solve", help="run N iterations and write the value and report")
    common(sp)
    solving(sp)

    sp = sub.add_parser("residual", help="solve and write the residual curve")
    common(sp)
    solving(sp)
    sp.add_argument("--rel-tol", type=_positive_float, default=0.01)
    sp.add_argument("--window", type=_nonneg_int, default=20)

    sp = sub.add_parser("sweep", help="convergence time and plateau residual across taus")
    common(sp)
    solving(sp, needs_tau=False)
    sp.add_argument("--tau-list", type=_tau_list, required=True, help="comma-separated taus")
    sp.add_argument("--horizon-budget", type=_positive_float, required=True,
                    help="common horizon T; each tau runs T / tau steps")
    sp.add_argument("--rel-tol", type=_positive_float, default=0.01)
    sp.add_argument("--window", type=_nonneg_int, default=20)

    sp = sub.add_parser("contraction", help="estimate the flow contraction rate")
    common(sp)
    sp.add_argument("--t", type=_positive_float, default=1.0, help="flow time")
    sp.add_argument("--samples", type=_nonneg_int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--substeps", type=_nonneg_int, default=1000)
    return p


# -- helpers ------------------------------------------------------------------

def _instance(arg):
    if not os.path.exists(arg) and arg in BUNDLED:
        return bundled_instance(arg)
    return load_instance(arg)


def _load(args):
    inst = _instance(args.instance)
    consts = derive_constants(inst, lam=args.lam)
    return inst, consts


def _print_constants(consts, out):
    for key, val in consts.summary().items():
        if isinstance(val, bool):
            print(f"{key}: {'yes' if val else 'no'}", file=out)
        else:
            print(f"{key}: {val:.17g}", file=out)
    for msg in consts.messages:
        print(f"note: {msg}", file=out)


def _require_assumptions(args, consts):
    if consts.assumptions_ok or args.unchecked:
        return None
    for msg in consts.messages:
        print(f"error: {msg}", file=sys.stderr)
    print("error: assumptions fail; pass --unchecked to run anyway", file=sys.stderr)
    return EXIT_ASSUMPTION


def _v0(args, inst, consts):
    if args.v0 == "eps":
        return MaxPlusValue.scalar_identity(consts.epsilon, inst.n)
    if args.v0 == "lambda":
        return MaxPlusValue.scalar_identity(consts.lam, inst.n)
    V0 = load_value(args.v0)
    if V0.dim != inst.n:
        raise UsageError(f"{args.v0}: value has dimension {V0.dim}, instance has {inst.n}")
    return V0


def _configs(args, inst):
    if args.substeps < 1:
        raise UsageError("--substeps must be at least 1")
    if args.grid_points < 1:
        raise UsageError("--grid-points must be at least 1")
    grid = GridSpec((args.grid_lo,) * inst.n, (args.grid_hi,) * inst.n, args.grid_points)
    pc = PruneConfig(args.prune, args.prune_order, args.prune_const)
    cfg = FlowConfig(args.substeps, args.integrator)
    return grid, pc, cfg


def _outdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_echo(args, extra=None) -> dict:
    keep = ("instance", "lam", "unchecked", "tau", "steps", "prune", "prune_order",
            "prune_const", "v0", "grid_lo", "grid_hi", "grid_points", "seed",
            "substeps", "integrator", "basis_cap", "tau_list", "horizon_budget",
            "rel_tol", "window")
    cfg = {k: getattr(args, k) for k in keep if hasattr(args, k)}
    cfg["command"] = args.command
    cfg.update(extra or {})
    return cfg


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------

def cmd_check(args) -> int:
    inst = _instance(args.instance)
    try:
        consts = derive_constants(inst, lam=args.lam)
    except AssumptionError as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except DegenerateInstanceError as exc:
        print(f"degenerate instance: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    print(f"instance: n = {inst.n}, k = {inst.k}, modes = {inst.num_modes}, "
          f"gamma = {inst.gamma:.17g}")
    _print_constants(consts, sys.stdout)
    return EXIT_OK if consts.assumptions_ok else EXIT_ASSUMPTION


def _run_solve(args, inst, consts, tau, steps, with_residual=True):
    grid, pc, cfg = _configs(args, inst)
    V0 = _v0(args, inst, consts)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        V, report = solve(inst, consts, V0, tau, steps, pc, cfg,
                          residual_grid=grid if with_residual else None,
                          basis_cap=args.basis_cap, threads=args.threads, seed=args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return V, report


def cmd_solve(args) -> int:
    inst, consts = _load(args)
    code = _require_assumptions(args, consts)
    if code is not None:
        return code
    V, report = _run_solve(args, inst, consts, args.tau, args.steps)
    out = _outdir(args.out)
    save_value(V, out / "value.json")
    rows = [(r.iteration, r.iteration * args.tau, r.basis_size, r.pruned, r.residual)
            for r in report.records]
    atomic_write_text(out / "report.csv", csv_text(REPORT_HEADER, rows))
    atomic_write_text(out / "timing.csv", csv_text(
        ("iteration", "wall_ns"), [(r.iteration, r.wall_ns) for r in report.records]))
    _write_json(out / "config.json", _config_echo(args, {"report": report.config()}))
    print(f"wrote {out / 'value.json'} ({len(V)} forms) and {out / 'report.csv'}")
    return EXIT_OK


def cmd_residual(args) -> int:
    inst, consts = _load(args)
    code = _require_assumptions(args, consts)
    if code is not None:
        return code
    V, report = _run_solve(args, inst, consts, args.tau, args.steps)
    out = _outdir(args.out)
    rows = [(r.iteration, r.iteration * args.tau, r.basis_size, r.residual)
            for r in report.records]
    atomic_write_text(out / "residual_curve.csv", csv_text(RESIDUAL_HEADER, rows))
    ct = convergence_time(report, args.rel_tol, args.window)
    _write_json(out / "config.json", _config_echo(args, {
        "report": report.config(), "T_star": ct.T_star if ct.converged else None,
        "N_star": ct.N_star if ct.converged else None}))
    if ct.converged:
        print(f"stationary at N* = {ct.N_star}, T* = {ct.T_star:.17g}; "
              f"final residual {report.residuals[-1]:.6g}")
    else:
        print(f"not stationary within {args.steps} iterations; "
              f"final residual {report.residuals[-1]:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    inst, consts = _load(args)
    code = _require_assumptions(args, consts)
    if code is not None:
        return code
    taus = []
    for t in args.tau_list:
        if t in taus:
            print(f"warning: duplicate tau {t!r} ignored", file=sys.stderr)
        else:
            taus.append(t)
    taus.sort(reverse=True)
    plan = []
    for tau in taus:
        N = args.horizon_budget / tau
        if abs(N - round(N)) > 1e-9 * max(1.0, N):
            raise UsageError(f"horizon budget {args.horizon_budget} is not a multiple of "
                             f"tau = {tau}")
        plan.append((tau, int(round(N))))
    out = _outdir(args.out)
    conv, err, status = [], [], []
    exit_code = EXIT_OK
    for tau, N in plan:
        try:
            _, report = _run_solve(args, inst, consts, tau, N)
        except HJBMaxPlusError as exc:
            exit_code = exit_code or _code_for(exc)
            status.append((tau, "failed", f"{type(exc).__name__}: {exc}"))
            conv.append((tau, -math.log(tau), math.nan))
            err.append((tau, math.nan, math.log(tau), math.nan))
            print(f"tau = {tau:g}: failed ({exc})", file=sys.stderr)
            continue
        ct = convergence_time(report, args.rel_tol, args.window)
        plateau = float(report.residuals[-1])
        conv.append((tau, -math.log(tau), ct.T_star))
        err.append((tau, plateau, math.log(tau), math.log(plateau) if plateau > 0 else math.nan))
        status.append((tau, "ok" if ct.converged else "not-converged", ""))
        print(f"tau = {tau:g}: N = {N}, T* = {ct.T_star:.6g}, plateau residual {plateau:.6g}")
    atomic_write_text(out / "convergence.csv", csv_text(CONVERGENCE_HEADER, conv))
    atomic_write_text(out / "error_curve.csv", csv_text(ERROR_HEADER, err))
    atomic_write_text(out / "sweep_status.csv", csv_text(("tau", "status", "message"), status))
    _write_json(out / "config.json", _config_echo(args, {"taus": taus}))
    return exit_code


def cmd_contraction(args) -> int:
    inst, consts = _load(args)
    code = _require_assumptions(args, consts)
    if code is not None:
        return code
    if args.substeps < 1:
        raise UsageError("--substeps must be at least 1")
    alpha, worst = estimate_contraction_rate(inst, consts, args.t, args.samples, args.seed,
                                             FlowConfig(args.substeps))
    print(f"t: {args.t:.17g}")
    print(f"samples: {args.samples}")
    print(f"seed: {args.seed}")
    print(f"worst_ratio: {worst:.17g}")
    print(f"alpha_hat: {alpha:.17g}")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "residual": cmd_residual,
            "sweep": cmd_sweep, "contraction": cmd_contraction}


def _code_for(exc) -> int:
    if isinstance(exc, (AssumptionError, DegenerateInstanceError)):
        return EXIT_ASSUMPTION
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, BasisLimitError):
        return EXIT_BASIS
    if isinstance(exc, FiniteEscapeError):
        return EXIT_ESCAPE
    return EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FiniteEscapeError as exc:
        word = "" if exc.word is None else f" (word {list(exc.word)})"
        print(f"finite escape: {exc}{word}", file=sys.stderr)
        return EXIT_ESCAPE
    except (HJBMaxPlusError, DomainError, NumericalFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
