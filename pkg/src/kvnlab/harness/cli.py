"""Command line entry point: ``kvnlab run|verify|export``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..kvn_propagator import read_snapshot, write_snapshot
from .config import ConfigError, default_config, parse_config
from .experiments import run_experiment
from .report import OUTPUT_ROOT_ENV, fmt_float, strip_runtime, write_csv


def _print_report(report) -> None:
    for line in report.summary_lines():
        print(line)
    print(f"{'PASSED' if report.passed else 'FAILED'}: {report.experiment} "
          f"({sum(c.passed for c in report.checks)}/{len(report.checks)} checks)")


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    report = run_experiment(cfg)
    _print_report(report)
    return 0 if report.passed else 1


def cmd_verify(args) -> int:
    from dataclasses import replace
    cfg = parse_config(args.config) if args.config else default_config("verify")
    if cfg.experiment != "verify":
        cfg = replace(cfg, run=replace(cfg.run, experiment="verify"))
    report = run_experiment(cfg)
    if args.check_determinism:
        again = run_experiment(cfg)
        same = json.dumps(strip_runtime(report.as_dict()), sort_keys=True) == json.dumps(
            strip_runtime(again.as_dict()), sort_keys=True)
        report.check("C10.determinism", "repeated verify gives identical reports", same, same,
                     "identical")
        from .experiments import Artifacts
        Artifacts(cfg, "verify").report(report)
    _print_report(report)
    return 0 if report.passed else 1


def cmd_export(args) -> int:
    psi, hbar = read_snapshot(args.snapshot)
    src = Path(args.snapshot)
    if args.format == "csv":
        dest = Path(args.output) if args.output else src.with_suffix(".csv")
        Qg, Pg = psi.grid.mesh()
        rows = [{"q": a, "p": b, "re": v.real, "im": v.imag, "rho": abs(v) ** 2}
                for a, b, v in zip(Qg.ravel(), Pg.ravel(), psi.values.ravel())]
        write_csv(dest, ["q", "p", "re", "im", "rho"], rows)
    else:
        dest = Path(args.output) if args.output else src.with_suffix(".export.bin")
        write_snapshot(dest, psi, hbar)
    print(f"wrote {dest} (t={fmt_float(psi.time)}, grid {psi.grid.describe()}, "
          f"norm {fmt_float(psi.norm)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kvnlab",
        description="QMFS / Koopman-von Neumann numerical laboratory.",
        epilog=f"Set {OUTPUT_ROOT_ENV} to override the output root directory.")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment named in a config file")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run every acceptance check")
    p_ver.add_argument("config", nargs="?")
    p_ver.add_argument("--check-determinism", action="store_true",
                       help="run the suite twice and compare the reports")
    p_ver.set_defaults(func=cmd_verify)

    p_exp = sub.add_parser("export", help="convert a wavefunction snapshot")
    p_exp.add_argument("snapshot")
    p_exp.add_argument("--format", choices=("csv", "binary"), required=True)
    p_exp.add_argument("-o", "--output")
    p_exp.set_defaults(func=cmd_export)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(all="raise", under="ignore")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
