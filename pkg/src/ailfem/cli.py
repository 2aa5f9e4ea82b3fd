"""Command-line front end: configure a run, stream per-step CSV, emit a JSON
summary.

Config precedence: built-in defaults < key=value config file < command-line
flags.  The output directory can also be set through the AILFEM_OUTDIR
environment variable (flags win).  Exit codes: 0 on completion, 2 on bad
usage or configuration, 1 on structural runtime errors (partial CSV is
flushed row by row).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")

DRIVERS = ("idealized", "practical", "gailfem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ailfem",
        description="Adaptive iteratively linearized FEM experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one adaptive experiment")
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--problem", help="built-in problem name")
    run.add_argument("--m", type=int, help="polynomial degree (1-4)")
    run.add_argument("--theta", type=float, help="bulk marking parameter")
    run.add_argument("--lambda", dest="lam", type=float, help="stopping parameter")
    run.add_argument("--driver", choices=DRIVERS, help="adaptive driver")
    run.add_argument("--delta", type=float, help="fixed damping (idealized only)")
    run.add_argument("--stopping", choices=("ib", "ib_prime", "ib_double_prime"))
    run.add_argument("--budget", type=float, help="cumulative work budget")
    run.add_argument("--eta-tol", dest="eta_tol", type=float,
                     help="stop when the estimator falls below this value")
    run.add_argument("--m-bound", dest="m_bound", type=float,
                     help="override the computed iterate bound M")
    run.add_argument("--outdir", help="output directory (default '.', env AILFEM_OUTDIR)")
    run.add_argument("--csv", help="per-step CSV path (default <outdir>/run.csv)")
    run.add_argument("--json", dest="json_path",
                     help="summary JSON path (default <outdir>/summary.json)")
    run.add_argument("--threads", type=int,
                     help="BLAS/OpenMP thread cap (default: library defaults)")

    sub.add_parser("list-problems", help="list built-in problems")
    return parser


_DEFAULTS = dict(problem=None, m=1, theta=0.5, lam=0.1, driver="practical",
                 delta=None, stopping="ib", budget=5e6, eta_tol=0.0,
                 m_bound=None, outdir=None, csv=None, json_path=None,
                 threads=None)

_CASTS = dict(m=int, theta=float, lam=float, delta=float, budget=float,
              eta_tol=float, m_bound=float, threads=int)
_FILE_KEYS = {"lambda": "lam", "json": "json_path"}


class ConfigError(Exception):
    pass


def read_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = (part.strip() for part in line.split("=", 1))
                key = _FILE_KEYS.get(key, key)
                if key not in _DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                out[key] = _CASTS[key](value) if key in _CASTS else value
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return out


def merge_settings(args: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["outdir"] is None:
        settings["outdir"] = os.environ.get("AILFEM_OUTDIR", ".")
    if settings["problem"] is None:
        raise ConfigError("missing problem name (--problem)")
    if settings["driver"] not in DRIVERS:
        raise ConfigError(f"unknown driver {settings['driver']!r}")
    if settings["driver"] == "idealized" and settings["delta"] is None:
        raise ConfigError("the idealized driver requires --delta")
    return settings


def _set_threads(threads):
    if threads is not None:
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)


def run_command(args: argparse.Namespace) -> int:
    settings = merge_settings(args)
    _set_threads(settings["threads"])

    # heavy imports after the thread caps are in place
    from .adaptivity import (AdaptiveConfig, AdaptivityError, csv_header,
                             rate_fit, record_to_csv, run_ailfem_idealized,
                             run_ailfem_practical)
    from .goal import default_goal_setup, run_gailfem
    from .problem import ProblemError, builtin_problem
    from .solver import SolverError

    driver = settings["driver"]
    is_goal_driver = driver == "gailfem"
    try:
        if is_goal_driver:
            setup = default_goal_setup()
            if settings["problem"] != "goal":
                raise ConfigError("the gailfem driver runs the 'goal' problem")
            problem = setup.primal
        else:
            problem = builtin_problem(settings["problem"])
    except ProblemError as exc:
        raise ConfigError(str(exc)) from exc

    config = AdaptiveConfig(
        degree=settings["m"], theta=settings["theta"], lam=settings["lam"],
        delta=settings["delta"], adaptive_delta=driver != "idealized",
        stopping=settings["stopping"], work_budget=settings["budget"],
        eta_tol=settings["eta_tol"], M_override=settings["m_bound"])

    outdir = settings["outdir"]
    os.makedirs(outdir, exist_ok=True)
    csv_path = settings["csv"] or os.path.join(outdir, "run.csv")
    json_path = settings["json_path"] or os.path.join(outdir, "summary.json")

    status = 0
    log = None
    with open(csv_path, "w") as csv_file:
        csv_file.write(csv_header(goal=is_goal_driver) + "\n")

        def sink(rec):
            csv_file.write(record_to_csv(rec, goal=is_goal_driver) + "\n")
            csv_file.flush()

        try:
            if driver == "idealized":
                log = run_ailfem_idealized(problem, config, sink=sink)
            elif driver == "practical":
                log = run_ailfem_practical(problem, config, sink=sink)
            else:
                log = run_gailfem(setup, config, sink=sink)
        except (AdaptivityError, SolverError) as exc:
            print(f"ailfem: structural error: {exc}", file=sys.stderr)
            log = getattr(exc, "log", None)
            status = 1

    summary = _summarize(log, settings, rate_fit, goal=is_goal_driver,
                         failed=status != 0)
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if status == 0:
        print(f"ailfem: {summary['status']} after work {summary['work']} "
              f"(eta {summary['eta_final']:.6g}); wrote {csv_path}")
    return status


def _summarize(log, settings, rate_fit, goal: bool, failed: bool) -> dict:
    def safe(value):
        return None if value is None or (isinstance(value, float)
                                         and not math.isfinite(value)) else value

    summary = {
        "problem": settings["problem"],
        "driver": settings["driver"],
        "m": settings["m"],
        "theta": settings["theta"],
        "lambda": settings["lam"],
        "stopping": settings["stopping"],
        "budget": settings["budget"],
        "status": "failed" if failed else (log.status if log else "failed"),
    }
    if log is None or not log.records:
        return summary
    summary.update({
        "M": log.M,
        "work": log.work_total,
        "levels": len(log.levels),
        "eta_final": log.levels[-1].eta if log.levels else log.records[-1].eta,
        "k_trace": log.k_trace,
        "delta_trace": log.delta_trace,
        "delta_final": log.records[-1].delta,
        "delta_decreases": sum(1 for r in log.records if r.event == "discarded_ii_c"),
        "marked_trace": [lvl.marked for lvl in log.levels],
        "energy_final": log.records[-1].energy,
    })
    try:
        summary["slope_eta_work"] = rate_fit(log, x="work", y="eta")
    except Exception:
        summary["slope_eta_work"] = None
    if goal:
        finals = [r for r in log.records if r.event == "stopped_inner"]
        summary["goal_value_final"] = safe(finals[-1].goal_value) if finals else None
        summary["goal_error_trace"] = [safe(r.goal_error) for r in finals]
        summary["goal_reference"] = -0.0015849518088245
        try:
            summary["slope_product_work"] = rate_fit(log, x="work",
                                                     y="product_estimator")
        except Exception:
            summary["slope_product_work"] = None
    return summary


def list_problems_command() -> int:
    from .problem import list_builtin_problems
    print("built-in problems:")
    for index, (name, prob) in enumerate(list_builtin_problems(), start=1):
        print(f"  {index}. {name}: eps = {prob.epsilon:g}, "
              f"b(v) = {prob.nonlinearity.formula}, norm = {prob.norm_variant}, "
              f"estimator = {prob.estimator_variant}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_command(args)
        return list_problems_command()
    except ConfigError as exc:
        print(f"ailfem: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
