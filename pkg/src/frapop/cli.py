"""Command-line interface.

One binary with five subcommands: ``run`` (single solver run), ``convergence``
(error/order ladder), ``distance`` (compare two particle dumps),
``fra-inspect`` (value grid of a quantized placement map) and
``validate-model`` (assumption checks).  Flags may also be supplied through a
flat ``key = value`` config file; explicit flags win.  Exit codes: 0 success,
1 runtime error, 2 invariant violation, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .errors import FrapopError
from .fileio import atomic_write_text
from .fra import build_quantized, value_grid
from .harness import (
    DESK_REFERENCE,
    PAPER_REFERENCE,
    initial_measure,
    order_table,
    report_to_csv,
    report_to_plot_data,
    report_to_text,
    steps_for,
)
from .measures import (
    format_particles,
    read_particles,
    rho_distance,
    total_mass,
    w1_normalized,
)
from .model import ModelSpec, cell_division_model, load_model_file, validate
from .model import _parse_coefficient  # shared coefficient grammar
from .solver import SimConfig, run

__all__ = ["main", "parse_and_dispatch"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVARIANT = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser whose failures exit with the usage code 64."""

    def error(self, message):
        raise _UsageError(message)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default=None,
                   help="built-in model name (currently: cell-division)")
    p.add_argument("--model-file", default=None,
                   help="path to a key = value model definition file")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="flat 'key = value' config file; explicit flags override it")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on internal parallelism (the engine is sequential; "
                        "accepted for forward compatibility)")


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="frapop",
                     description="Splitting-particle solver for size-structured "
                                 "population models with quantized birth placement.")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p_run = sub.add_parser("run", parents=[], help="single solver run",
                           description="Run the splitting scheme once and dump "
                                       "the final particle measure.")
    _add_model_flags(p_run)
    p_run.add_argument("--T", type=float, default=1.0, help="final time (time units)")
    p_run.add_argument("--dt", type=float, default=None, help="time step (time units)")
    p_run.add_argument("--epsilon", type=float, default=None,
                       help="placement quantization step (size units)")
    p_run.add_argument("--dx", type=float, default=None,
                       help="initial-data cell width (size units); defaults to dt")
    p_run.add_argument("--substeps", type=int, default=1,
                       help="ODE sub-integrations per time step")
    p_run.add_argument("--all-newborns", action="store_true",
                       help="create every grid slot each step, even zero-mass ones")
    p_run.add_argument("--paper-sign", action="store_true",
                       help="use the +c mass ODE sign instead of the decay sign")
    p_run.add_argument("--out", default=None, help="particle dump output path")
    p_run.add_argument("--trace", default=None,
                       help="per-step trace CSV path (columns k,t,count,mass,wall_ms)")
    _add_common_flags(p_run)

    p_conv = sub.add_parser("convergence", help="error/order ladder",
                            description="Run a time-step halving ladder against a "
                                        "cached fine reference and report errors "
                                        "and observed orders.")
    _add_model_flags(p_conv)
    p_conv.add_argument("--T", type=float, default=1.0, help="final time (time units)")
    p_conv.add_argument("--dt-max", type=float, default=0.1,
                        help="coarsest time step of the ladder (time units)")
    p_conv.add_argument("--halvings", type=int, default=3,
                        help="number of dt halvings below dt-max")
    p_conv.add_argument("--epsilon", type=float, default=1e-2,
                        help="placement quantization step (size units)")
    p_conv.add_argument("--paper-reference", action="store_true",
                        help="use the fine published reference parameters "
                             "(slow) instead of the desk-scale reference")
    p_conv.add_argument("--substeps", type=int, default=1,
                        help="ODE sub-integrations per time step")
    p_conv.add_argument("--out-csv", default=None, help="write the ladder as CSV")
    p_conv.add_argument("--out-table", default=None, help="write an aligned text table")
    p_conv.add_argument("--out-plot", default=None,
                        help="write two-column 'dt err' plot data")
    p_conv.add_argument("--cache-dir", default=None,
                        help="reference cache directory (env FRA_CACHE_DIR)")
    _add_common_flags(p_conv)

    p_dist = sub.add_parser("distance", help="distance between two particle dumps",
                            description="Print the mass-aware transport distance "
                                        "(and normalized W1 when defined) between "
                                        "two particle dump files.")
    p_dist.add_argument("a", help="first particle dump")
    p_dist.add_argument("b", help="second particle dump")
    _add_common_flags(p_dist)

    p_fra = sub.add_parser("fra-inspect", help="inspect a quantized placement map",
                           description="Tabulate the value grid of a quantized "
                                       "placement map: slot index, grid value, "
                                       "sampled preimage size, and the measured "
                                       "sup deviation from the exact map.")
    p_fra.add_argument("--map", default="poly 0 0.5",
                       help="placement map as 'poly c0 c1 ...' or piecewise "
                            "(default: halving map y/2)")
    p_fra.add_argument("--epsilon", type=float, required=False, default=1e-2,
                       help="quantization step (size units)")
    p_fra.add_argument("--cap", type=float, default=1.0,
                       help="domain bound M; the map is sampled on [0, M)")
    p_fra.add_argument("--samples", type=int, default=10000,
                       help="number of sample points on [0, M)")
    _add_common_flags(p_fra)

    p_val = sub.add_parser("validate-model", help="check model assumptions",
                           description="Sample the structural assumptions "
                                       "(sublinear placement, inward boundary "
                                       "growth, nonnegative rates) and report "
                                       "violations.")
    _add_model_flags(p_val)
    _add_common_flags(p_val)

    return parser, {
        "run": p_run,
        "convergence": p_conv,
        "distance": p_dist,
        "fra-inspect": p_fra,
        "validate-model": p_val,
    }


# --- config files -----------------------------------------------------------


def _parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise _UsageError(f"config line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def _apply_config(args: argparse.Namespace, sub_parser: argparse.ArgumentParser,
                  explicit: set[str]) -> None:
    """Fill flags not given on the command line from the config file."""
    with open(args.config) as fh:
        entries = _parse_config_text(fh.read())
    actions = {a.dest: a for a in sub_parser._actions
               if a.dest not in ("help", "config")}
    for key, value in entries.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise _UsageError(f"unknown config key {key!r}")
        if dest in explicit:
            continue
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            lowered = value.lower()
            if lowered not in ("true", "false", "0", "1", "yes", "no"):
                raise _UsageError(f"config key {key!r}: expected a boolean")
            setattr(args, dest, lowered in ("true", "1", "yes"))
        elif action.type is not None:
            try:
                setattr(args, dest, action.type(value))
            except ValueError:
                raise _UsageError(f"config key {key!r}: bad value {value!r}")
        else:
            setattr(args, dest, value)


def _explicit_dests(argv: list[str], sub_parser: argparse.ArgumentParser) -> set[str]:
    by_flag = {}
    for action in sub_parser._actions:
        for opt in action.option_strings:
            by_flag[opt] = action.dest
    seen = set()
    for tok in argv:
        flag = tok.split("=", 1)[0]
        if flag in by_flag:
            seen.add(by_flag[flag])
    return seen


# --- subcommand bodies -------------------------------------------------------


def _resolve_model(args) -> ModelSpec:
    if args.model_file is not None:
        if args.model is not None:
            raise _UsageError("--model and --model-file are mutually exclusive")
        return load_model_file(args.model_file)
    name = args.model or "cell-division"
    if name != "cell-division":
        raise _UsageError(f"unknown built-in model {name!r}")
    return cell_division_model()


def _positive(value, flag: str) -> float:
    if value is None or not value > 0:
        raise _UsageError(f"{flag} must be a positive number")
    return float(value)


def _cmd_run(args) -> int:
    model = _resolve_model(args)
    T = _positive(args.T, "--T")
    dt = _positive(args.dt, "--dt")
    epsilon = _positive(args.epsilon, "--epsilon")
    dx = _positive(args.dx if args.dx is not None else dt, "--dx")
    if args.substeps < 1:
        raise _UsageError("--substeps must be >= 1")
    cfg = SimConfig(
        T=T, N=steps_for(T, dt), epsilon=epsilon, cap=model.cap, dx=dx,
        ode_substeps=args.substeps,
        create_all_newborns=args.all_newborns,
        paper_sign=args.paper_sign,
    )
    mu0 = initial_measure(model, dx)
    final, traces = run(model, cfg, mu0)
    if args.out:
        atomic_write_text(args.out, format_particles(final))
    if args.trace:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "t", "count", "mass", "wall_ms"])
        for tr in traces:
            writer.writerow([
                tr.k, f"{tr.t:.17g}", tr.count_after,
                f"{tr.mass_after:.17g}", f"{tr.wall_time * 1e3:.6f}",
            ])
        atomic_write_text(args.trace, buf.getvalue())
    print(f"steps {cfg.N}  particles {len(final)}  total_mass {total_mass(final):.17g}")
    return EXIT_OK


def _cmd_convergence(args) -> int:
    model = _resolve_model(args)
    T = _positive(args.T, "--T")
    dt_max = _positive(args.dt_max, "--dt-max")
    epsilon = _positive(args.epsilon, "--epsilon")
    if args.halvings < 1:
        raise _UsageError("--halvings must be >= 1")
    reference = PAPER_REFERENCE if args.paper_reference else DESK_REFERENCE
    report = order_table(
        model, T, dt_max, args.halvings, epsilon,
        reference=reference, cache_dir=args.cache_dir,
        substeps=args.substeps,
    )
    text = report_to_text(report)
    if args.out_csv:
        atomic_write_text(args.out_csv, report_to_csv(report))
    if args.out_table:
        atomic_write_text(args.out_table, text)
    if args.out_plot:
        atomic_write_text(args.out_plot, report_to_plot_data(report))
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_distance(args) -> int:
    mu = read_particles(args.a)
    nu = read_particles(args.b)
    print(f"rho {rho_distance(mu, nu):.17g}")
    if total_mass(mu) > 0.0 and total_mass(nu) > 0.0:
        print(f"w1_normalized {w1_normalized(mu, nu):.17g}")
    return EXIT_OK


def _cmd_fra_inspect(args) -> int:
    f = _parse_coefficient(args.map)
    epsilon = _positive(args.epsilon, "--epsilon")
    cap = _positive(args.cap, "--cap")
    if args.samples < 2:
        raise _UsageError("--samples must be >= 2")
    q = build_quantized(f, epsilon, cap)
    xs = np.linspace(0.0, np.nextafter(cap, 0.0), args.samples)
    slots = q.slot_index(xs)
    counts = np.bincount(slots, minlength=q.J)
    exact = np.asarray(f(xs), dtype=np.float64)
    sup_dev = float(np.max(exact - q(xs))) if xs.size else 0.0
    grid = value_grid(q)
    print(f"J {q.J}  epsilon {epsilon:.17g}  cap {cap:.17g}")
    print(f"{'j':>6}  {'a_j':>24}  {'preimage_samples':>16}")
    for j in range(q.J):
        print(f"{j + 1:>6}  {grid[j]:>24.17g}  {int(counts[j]):>16}")
    print(f"sup deviation over {args.samples} samples: {sup_dev:.17g} (< epsilon)")
    return EXIT_OK


def _cmd_validate_model(args) -> int:
    model = _resolve_model(args)
    report = validate(model)
    print(report.render())
    return EXIT_OK if report.ok else EXIT_INVARIANT


_DISPATCH = {
    "run": _cmd_run,
    "convergence": _cmd_convergence,
    "distance": _cmd_distance,
    "fra-inspect": _cmd_fra_inspect,
    "validate-model": _cmd_validate_model,
}


def parse_and_dispatch(argv: list[str]) -> int:
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise _UsageError("a subcommand is required")
        sub_parser = subs[args.subcommand]
        if getattr(args, "config", None):
            _apply_config(args, sub_parser, _explicit_dests(argv, sub_parser))
        return _DISPATCH[args.subcommand](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FrapopError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
