"""Command-line entry point: ``imcf-gap run|batch|audit|gap``.

Exit codes: 0 all checks pass, 1 some audit check failed, 2 configuration
or input error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .monotonicity_audit import AuditError, FlowTrace, audit_trace, bbn_bound, gap_certificate
from .scenario import CONFIG_ERRORS, ConfigError, load_scenario, run_scenario, write_artifacts

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SCENARIO_SUFFIXES = (".yaml", ".yml", ".json")

log = logging.getLogger("imcf_gap")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    common.add_argument("--out", type=Path, default=None, help="directory for trace/report files")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="imcf-gap", description="Weak IMCF simulator and auditor")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one scenario file")
    run.add_argument("scenario", type=Path)
    batch = sub.add_parser("batch", parents=[common], help="run every scenario in a directory")
    batch.add_argument("directory", type=Path)
    audit = sub.add_parser("audit", parents=[common], help="audit a trace CSV")
    audit.add_argument("trace", type=Path)
    audit.add_argument("--lambda", dest="lam", type=float, default=None)
    audit.add_argument("--a0", type=float, default=None)
    audit.add_argument("--area-tol", type=float, default=1e-3)
    gap = sub.add_parser("gap", parents=[common], help="check lambda * A0 against both bounds")
    gap.add_argument("--lambda", dest="lam", type=float, required=True)
    gap.add_argument("--a0", type=float, required=True)
    return ap


def _run_one(path: Path, args) -> tuple[int, str]:
    try:
        sc = load_scenario(path)
        result = run_scenario(sc, seed=args.seed, tol_scale=args.tol_scale)
    except CONFIG_ERRORS as exc:
        return EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    if args.out is not None:
        write_artifacts(result, args.out)
    return result.exit_code, result.report.summary()


def cmd_run(args) -> int:
    code, text = _run_one(args.scenario, args)
    print(text)
    print(f"{args.scenario.name}: {'PASS' if code == 0 else 'FAIL' if code == 1 else 'CONFIG ERROR'}")
    return code


def cmd_batch(args) -> int:
    if not args.directory.is_dir():
        print(f"not a directory: {args.directory}", file=sys.stderr)
        return EXIT_CONFIG
    files = sorted(p for p in args.directory.iterdir() if p.suffix in SCENARIO_SUFFIXES)
    if not files:
        print(f"no scenario files in {args.directory}", file=sys.stderr)
        return EXIT_CONFIG
    rows, worst = [], EXIT_PASS
    for path in files:
        code, text = _run_one(path, args)
        log.info("%s\n%s", path.name, text)
        if code == EXIT_CONFIG:
            print(f"{path.name}: {text}", file=sys.stderr)
        rows.append((path.name, code))
        worst = max(worst, code)
    width = max(len(name) for name, _ in rows)
    label = {EXIT_PASS: "PASS", EXIT_FAIL: "FAIL", EXIT_CONFIG: "CONFIG ERROR"}
    for name, code in rows:
        print(f"{name:<{width}}  {label[code]}")
    n_pass = sum(1 for _, c in rows if c == EXIT_PASS)
    print(f"{n_pass}/{len(rows)} scenarios passed")
    return worst


def cmd_audit(args) -> int:
    try:
        trace = FlowTrace.from_csv(args.trace.read_text())
        report = audit_trace(trace, lam=args.lam, area_tol=args.area_tol, tol_scale=args.tol_scale)
        if args.lam is not None and args.a0 is not None:
            for name, verdict in (("gap_certificate", gap_certificate(args.lam, args.a0)),
                                  ("bbn_bound", bbn_bound(args.lam, args.a0))):
                report.add(name, verdict.passed, verdict.ratio, note=verdict.describe())
    except (OSError, AuditError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.summary())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(report.to_text())
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_gap(args) -> int:
    try:
        gap = gap_certificate(args.lam, args.a0)
        bbn = bbn_bound(args.lam, args.a0)
    except AuditError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"lambda*A0/pi = {gap.product / math.pi:.6f}")
    print(f"gap bound   c/pi = {gap.c_value / math.pi:.6f}: {'PASS' if gap.passed else 'FAIL'}")
    print(f"BBN bound 8pi/pi = 8.000000: {'PASS' if bbn.passed else 'FAIL'}")
    return EXIT_PASS if gap.passed and bbn.passed else EXIT_FAIL


COMMANDS = {"run": cmd_run, "batch": cmd_batch, "audit": cmd_audit, "gap": cmd_gap}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
