"""Command-line interface: run scenarios, sweep parameters, list modes.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure,
4 capacity (state space above the memory cap).  Failures are reported as a
structured JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional

import numpy as np

from .errors import ConfigError, VibrecoilError
from .hilbert import build_basis
from .scenarios import (SCENARIO_NAMES, SWEEP_PARAMS, base_meta, csv_text,
                        parse_terms, run_scenario, run_sweep, scenario_config)


def _read_config(path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _parse_values(args) -> List[float]:
    if (args.values is None) == (args.log_range is None):
        raise ConfigError("provide exactly one of --values or --log-range")
    if args.values is not None:
        parts = [p for p in args.values.split(",") if p.strip()]
        if not parts:
            raise ConfigError("empty --values list")
        try:
            return [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"cannot parse --values: {exc}") from exc
    fields = args.log_range.split(":")
    if len(fields) != 3:
        raise ConfigError("--log-range must look like lo:hi:n")
    try:
        lo, hi, n = float(fields[0]), float(fields[1]), int(fields[2])
    except ValueError as exc:
        raise ConfigError(f"cannot parse --log-range: {exc}") from exc
    if lo <= 0 or hi <= 0 or n < 1:
        raise ConfigError("--log-range needs positive bounds and n >= 1")
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n)]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibrecoil",
        description="Recoil dynamics of collectively decaying trapped atoms.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file (scenario defaults "
                                        "apply when omitted)")
        p.add_argument("--set", action="append", dest="overrides", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override a single config key")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="max parallel workers (capped by "
                            "VIBRECOIL_THREADS)")

    run_p = sub.add_parser("run", help="run a named scenario")
    run_p.add_argument("scenario", choices=SCENARIO_NAMES)
    common(run_p)
    run_p.add_argument("--terms", default=None,
                       help="generator term mask, e.g. trap,dd,jumpd,jumpx")
    run_p.add_argument("--dump-basis", action="store_true",
                       help="print the composite basis table and exit")

    sweep_p = sub.add_parser("sweep", help="sweep one parameter of a scenario")
    sweep_p.add_argument("scenario", choices=SCENARIO_NAMES)
    sweep_p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sweep_p.add_argument("--values", default=None,
                         help="comma-separated list, e.g. 0.01,0.1,1")
    sweep_p.add_argument("--log-range", default=None, metavar="LO:HI:N",
                         help="N log-spaced values from LO to HI")
    common(sweep_p)

    modes_p = sub.add_parser("modes",
                             help="print collective decay modes as CSV")
    modes_p.add_argument("--config", help="INI config file")
    modes_p.add_argument("--set", action="append", dest="overrides",
                         default=[], metavar="SECTION.KEY=VALUE")
    return parser


def _cmd_run(args) -> int:
    config_text = _read_config(args.config)
    if args.dump_basis:
        cfg = scenario_config(args.scenario, config_text, args.overrides)
        basis = build_basis(cfg)
        print("flat,internal_j,occupations")
        for flat, j, occ in basis.dump_rows():
            print(f"{flat},{j},\"{','.join(str(n) for n in occ)}\"")
        return 0
    result = run_scenario(args.scenario, config_text,
                          overrides=args.overrides, out_dir=args.out,
                          terms=parse_terms(args.terms),
                          max_workers=args.workers)
    print(f"wrote {result.csv_path} and {result.summary_path}")
    return 0


def _cmd_sweep(args) -> int:
    values = _parse_values(args)
    result = run_sweep(args.scenario, args.param, values,
                       config_text=_read_config(args.config),
                       overrides=args.overrides, out_dir=args.out,
                       max_workers=args.workers)
    failed = result.summary["results"]["n_failed"]
    print(f"wrote {result.csv_path} ({len(result.rows)} points, "
          f"{failed} failed)")
    return 0


def _cmd_modes(args) -> int:
    from .scenarios import _run_modes

    config_text = _read_config(args.config)
    cfg = scenario_config("modes", config_text, args.overrides)
    rows, fieldnames, meta, _, _ = _run_modes(cfg, None, None)
    sys.stdout.write(csv_text(fieldnames, rows,
                              base_meta("modes", cfg, **meta)))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "modes": _cmd_modes}
    try:
        return handlers[args.command](args)
    except VibrecoilError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc),
                   "exit_code": exc.exit_code}, sys.stderr)
        sys.stderr.write("\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
