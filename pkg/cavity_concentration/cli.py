#!/usr/bin/env python3
"""
Cavity Concentration - command-line interface

  cavconc run           closed-form and deterministic results for one config
  cavconc sweep         CSV table over a grid of k, t2 or a
  cavconc trajectories  Monte Carlo estimate (JSON)
  cavconc verify        analytic vs deterministic vs Monte Carlo table
"""

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, terminal
from .dynamics import DynamicsParams, transfer_solution
from .errors import ConcentrationError, ValidationError
from .protocol import MIN_QUAD_POINTS, InputPair, ProtocolConfig
from .reports import (
    SCHEMA_VERSION, build_run_report, build_verification, config_to_dict, csv_row,
    estimate_to_dict, format_verification_table, to_csv, to_json, transfer_to_dict,
    Verdict, verification_to_dict,
)
from .trajectories import default_workers, estimate

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-9


def parse_amplitude(text: str) -> complex:
    """'re' or 're,im'"""
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 're' or 're,im', got {text!r}")


def configure_logging(verbosity: int):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _complement(amp: complex, name: str) -> complex:
    rest = 1.0 - abs(amp) ** 2
    if rest < -NORMALIZATION_TOL:
        raise ValidationError(f"|{name}| > 1 leaves no room for its partner amplitude")
    return complex(math.sqrt(max(rest, 0.0)), 0.0)


def _pair(first: Optional[complex], second: Optional[complex], names) -> Optional[InputPair]:
    if first is None and second is None:
        return None
    if second is None:
        second = _complement(first, names[0])
    elif first is None:
        first = _complement(second, names[1])
    return InputPair.normalized(first, second, NORMALIZATION_TOL, name=f"pair ({names[0]}, {names[1]})")


def build_config(args, a: Optional[complex] = None) -> ProtocolConfig:
    """ProtocolConfig from parsed flags; --c/--d omitted means matched pairs"""
    a = args.a if a is None else a
    pair12 = _pair(a, args.b, ("a", "b"))
    pair34 = _pair(args.c, args.d, ("c", "d"))
    dyn = DynamicsParams(args.delta, args.k)
    if pair34 is None:
        return ProtocolConfig.matched_pairs(pair12, dyn, args.t2, args.nmax)
    return ProtocolConfig(pair12, pair34, dyn, args.t2, args.nmax, matched=pair12.close_to(pair34))


def _emit(text: str, out: Optional[str]):
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info("wrote %s", path)
    else:
        sys.stdout.write(text)
        terminal.flush_output(sys.stdout)


def cmd_run(args) -> int:
    config = build_config(args)
    if args.format == "csv":
        _emit(to_csv([csv_row(config, None, args.quad_points)]), args.out)
    else:
        _emit(to_json(build_run_report(config, args.quad_points).to_dict()), args.out)
    return 0


def sweep_grid(start: float, stop: float, steps: int) -> np.ndarray:
    if steps < 1:
        raise ValidationError(f"--steps must be >= 1, got {steps}")
    if stop < start:
        raise ValidationError(f"inverted range: --from {start:g} > --to {stop:g}")
    if steps > 1 and stop == start:
        raise ValidationError("empty range: --from equals --to with more than one step")
    return np.linspace(start, stop, steps)


def cmd_sweep(args) -> int:
    grid = sweep_grid(args.start, args.stop, args.steps)
    if args.vary == "a" and args.b is not None:
        raise ValidationError("--b is derived from a when sweeping a; drop --b")
    base = build_config(args) if args.vary != "a" else None

    rows = []
    for value in grid:
        value = float(value)
        if args.vary == "k":
            config = replace(base, dyn=DynamicsParams(base.dyn.delta, value))
        elif args.vary == "t2":
            config = replace(base, t2=value)
        else:
            config = build_config(args, a=complex(value, 0.0))
        logger.debug("sweep %s=%g", args.vary, value)
        rows.append(csv_row(config, value, args.quad_points))
    _emit(to_csv(rows), args.out)
    return 0


def _estimate(args, config):
    workers = args.workers if args.workers is not None else default_workers()
    return estimate(config, args.n, args.seed, workers)


def cmd_trajectories(args) -> int:
    config = build_config(args)
    report = _estimate(args, config)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(config),
        "transfer": transfer_to_dict(transfer_solution(config.dyn)),
        "monte_carlo": estimate_to_dict(report),
    }
    _emit(to_json(payload), args.out)
    return 0


def cmd_verify(args) -> int:
    config = build_config(args)
    report = _estimate(args, config)
    rows = build_verification(config, report, args.quad_points)
    _emit(to_json(verification_to_dict(config, rows, report)), args.out)

    color = terminal.supports_color(sys.stderr)
    sys.stderr.write(format_verification_table(rows, color=color))
    terminal.flush_output(sys.stderr)
    return 1 if any(row.verdict is Verdict.FAIL for row in rows) else 0


COMMANDS = {
    "run": (cmd_run, "Closed-form and deterministic results for one configuration"),
    "sweep": (cmd_sweep, "CSV table over a grid of k, t2 or a"),
    "trajectories": (cmd_trajectories, "Monte Carlo quantum-jump estimate"),
    "verify": (cmd_verify, "Cross-check analytic, deterministic and Monte Carlo results"),
}


def _add_config_flags(parser):
    group = parser.add_argument_group("configuration")
    group.add_argument("--a", type=parse_amplitude, default=complex(1.0 / math.sqrt(2.0)),
                       help="amplitude of |e>1|g>2 as 're' or 're,im' (default: 1/sqrt(2))")
    group.add_argument("--b", type=parse_amplitude, default=None,
                       help="amplitude of |g>1|e>2 (default: sqrt(1 - |a|^2))")
    group.add_argument("--c", type=parse_amplitude, default=None,
                       help="amplitude of |e>3|g>4 (default: matched, c = a)")
    group.add_argument("--d", type=parse_amplitude, default=None,
                       help="amplitude of |g>3|e>4 (default: matched, d = b)")
    group.add_argument("--delta", type=float, default=1.0, help="effective coupling (default: 1.0)")
    group.add_argument("--k", type=float, default=0.1, help="cavity decay rate (default: 0.1)")
    group.add_argument("--t2", type=float, default=2.0, help="detection window (default: 2.0)")
    group.add_argument("--nmax", type=int, default=2, help="Fock truncation per cavity (default: 2)")
    group.add_argument("--quad-points", type=int, default=MIN_QUAD_POINTS,
                       help=f"Gauss-Legendre nodes per panel (default: {MIN_QUAD_POINTS})")
    parser.add_argument("--out", default=None, help="write the report here instead of stdout")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output on stderr")


def _add_monte_carlo_flags(parser, default_n: int):
    parser.add_argument("--n", type=int, default=default_n,
                        help=f"number of trajectories (default: {default_n})")
    parser.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $CAVCONC_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavconc",
        description="Entanglement concentration via cavity decay: simulator and verification suite",
    )
    parser.add_argument("--version", action="version", version=f"cavconc {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, (handler, description) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=description, description=description)
        sub.set_defaults(handler=handler)
        _add_config_flags(sub)
        if name == "run":
            sub.add_argument("--format", choices=("json", "csv"), default="json")
        elif name == "sweep":
            sub.add_argument("--vary", choices=("k", "t2", "a"), required=True)
            sub.add_argument("--from", dest="start", type=float, required=True)
            sub.add_argument("--to", dest="stop", type=float, required=True)
            sub.add_argument("--steps", type=int, required=True)
        elif name == "trajectories":
            _add_monte_carlo_flags(sub, 100_000)
        else:
            _add_monte_carlo_flags(sub, 20_000)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ConcentrationError as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("\ninterrupted", file=sys.stderr)
        return 130


def _command_main(command: str):
    def entry(argv: Optional[Sequence[str]] = None) -> int:
        return main([command, *(sys.argv[1:] if argv is None else argv)])
    entry.__name__ = f"{command}_main"
    entry.__doc__ = f"Entry point for cavconc-{command}"
    return entry


run_main = _command_main("run")
sweep_main = _command_main("sweep")
trajectories_main = _command_main("trajectories")
verify_main = _command_main("verify")


if __name__ == "__main__":
    raise SystemExit(main())
