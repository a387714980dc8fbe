"""Command-line front end: ``gen``, ``run``, ``sweep`` and ``validate``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import scenario_gen
from .model import ScenarioError
from .optimizer import SolverOptions, maximize_gee
from .qos import MODES, QosMode
from .sweep import ConfigError, SweepConfig, run_sweep
from .validation import run_all


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def cmd_gen(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise ConfigError("generator config must be a JSON object")
        cfg = scenario_gen.GenConfig.from_dict(doc)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        return _fail(f"{args.config}: {exc}")
    s = scenario_gen.generate(cfg)
    scenario_gen.save(s, args.out)
    print(f"wrote {args.out} (K={s.K}, N={s.N}, seed={cfg.seed})")
    return 0


def cmd_run(args) -> int:
    try:
        s = scenario_gen.load(args.scenario)
        if args.rmin is not None:
            s = s.replace(r_min=np.full(s.K, float(args.rmin)))
        if args.qos == "barrier":
            mode = QosMode.barrier(rho=args.rho)
        else:
            mode = QosMode(args.qos)
        report = maximize_gee(s, SolverOptions(qos=mode))
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    print(report.summary())
    return 0


def cmd_sweep(args) -> int:
    try:
        cfg = SweepConfig.load(args.config)
        out = args.out if args.out is not None else cfg.out
        if out is None:
            raise ConfigError("no output path given", "out")
        rows = run_sweep(cfg, out)
    except (OSError, ConfigError) as exc:
        return _fail(str(exc))
    flagged = sum(r["nonconverged_count"] for r in rows)
    print(f"wrote {out} ({len(rows)} rows, {flagged} non-converged cells)")
    return 0


def cmd_validate(args) -> int:
    failed = 0
    for check in run_all(quick=args.quick):
        print(check.line(), flush=True)
        failed += not check.passed
    print(f"{failed} check(s) failed" if failed else "all checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geeopt", description="GEE maximization for multi-carrier interference networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a scenario from a JSON generator config")
    p.add_argument("--config", required=True, help="generator config (JSON, powers in dBW)")
    p.add_argument("--out", required=True, help="scenario output file (JSON)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="solve one scenario and print a summary")
    p.add_argument("--scenario", required=True, help="scenario file written by 'gen'")
    p.add_argument("--qos", choices=MODES, default="none")
    p.add_argument("--rho", type=float, default=1.0, help="barrier weight (barrier mode)")
    p.add_argument("--rmin", type=float, default=None, help="override every user's minimum rate (bit/s/Hz)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte Carlo sweep written as CSV")
    p.add_argument("--config", required=True, help="sweep config (JSON)")
    p.add_argument("--out", default=None, help="CSV output file (overrides the config's 'out')")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the oracle and invariant checks")
    p.add_argument("--quick", action="store_true", help="use about a tenth of the samples")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
