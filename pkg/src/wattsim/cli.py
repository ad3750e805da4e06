"""Command-line front end: ``python -m wattsim --scenario NAME [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import InputError, ScenarioError, WattsimError
from .report import run_scenario, sweep, sweep_csv
from .scenario import bundled_names, parse_override, parse_value
from .trace import _atomic_write, format_summary

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wattsim",
        description="Simulate energy and performance of a wimpy-node cluster or a brawny server.")
    p.add_argument("--scenario", help="scenario file, or the name of a bundled scenario")
    p.add_argument("--mode", choices=["server", "cluster-reactive", "cluster-forecast"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a dotted scenario key, e.g. workload.clients=[20,40]; repeatable")
    p.add_argument("--sweep", metavar="KEY=V1,V2,...", help="one run per value, written to sweep.csv")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep points (default 1)")
    p.add_argument("--list", action="store_true", help="list bundled scenarios and exit")
    p.add_argument("--quiet", action="store_true")
    return p


def _parse_sweep(text: str) -> tuple[str, list]:
    key, sep, values = text.partition("=")
    if not sep or not key.strip():
        raise InputError(f"--sweep {text!r} is not KEY=V1,V2,...")
    vals = [parse_value(v.strip()) for v in values.split(",") if v.strip()]
    if not vals:
        raise InputError("--sweep needs at least one value")
    return key.strip(), vals


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print("\n".join(bundled_names()))
        return EXIT_OK
    if not args.scenario:
        print("error: --scenario is required", file=sys.stderr)
        return EXIT_INVALID
    try:
        overrides = dict(parse_override(o) for o in args.override)
        if args.mode:
            overrides["mode"] = args.mode
        if args.seed is not None:
            overrides["seed"] = args.seed
        out = Path(args.out)
        if args.sweep:
            key, values = _parse_sweep(args.sweep)
            rows = sweep(args.scenario, key, values, overrides, jobs=max(1, args.jobs))
            out.mkdir(parents=True, exist_ok=True)
            text = sweep_csv(rows)
            _atomic_write(out / "sweep.csv", text)
            if not args.quiet:
                print(text, end="")
            return EXIT_OK
        results = run_scenario(args.scenario, overrides, out)
    except (ScenarioError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except WattsimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        for r in results:
            if len(results) > 1:
                print(f"[{r.scenario.name}]")
            print(format_summary(r.summary), end="")
    return EXIT_OK
