"""Command-line entry point: ``verify``, ``simulate`` and ``report``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attitude import run_observer
from .kernel import GuardViolation, IntegrationDiverged, RankDeficiency
from .scenario import ScenarioError, load_scenario, shipped_path
from .suite import CHECK_NAMES, run_suite

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (GuardViolation, IntegrationDiverged, RankDeficiency, np.linalg.LinAlgError,
                  FloatingPointError, ArithmeticError)

CSV_COLUMNS = ["t", "qx_true", "qy_true", "qz_true", "qx_est", "qy_est", "qz_est",
               "err_angle_rad", "p_trace", "wx", "wy", "wz"]


def _fail(code: int, msg: str) -> int:
    print(msg, file=sys.stderr)
    return code


def _resolve(path: str) -> str:
    """A config path, or the name of a bundled scenario."""
    if Path(path).exists():
        return path
    try:
        return str(shipped_path(path))
    except ScenarioError:
        return path


def _parse_suite(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise ScenarioError("empty --suite")
    if "all" in names:
        return ["all"]
    bad = [n for n in names if n not in CHECK_NAMES]
    if bad:
        raise ScenarioError(f"unknown checks {bad}; choose from {', '.join(CHECK_NAMES)} or all")
    return names


def build_report(sc, reports: dict, wall: float) -> dict:
    checks = []
    for name, rep in reports.items():
        d = rep.to_dict()
        d["expected"] = sc.expected(name)
        checks.append(d)
    return {
        "version": __version__,
        "scenario": sc.name,
        "scenario_digest": sc.digest(),
        "checks": checks,
        "wall_time_s": round(wall, 3),
    }


def cmd_verify(args) -> int:
    try:
        sc = load_scenario(_resolve(args.config))
        suite = _parse_suite(args.suite)
        if sc.system is None:
            raise ScenarioError(f"{args.config}: scenario has no system to verify")
        m = sc.build_manifold()
        f = sc.build_field()
        signals = sc.build_inputs()
        cfg = sc.suite_config(args.tolerance_scale)
    except (ScenarioError, ValueError) as e:
        return _fail(EXIT_CONFIG, f"config error: {e}")

    t0 = time.perf_counter()
    try:
        reports = run_suite(m, f, signals, cfg, suite, sc.input_labels())
    except NUMERIC_ERRORS as e:
        return _fail(EXIT_NUMERIC, f"numerical failure: {type(e).__name__}: {e}")
    except ValueError as e:
        return _fail(EXIT_CONFIG, f"config error: {e}")
    doc = build_report(sc, reports, time.perf_counter() - t0)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")

    mismatches = 0
    for c in doc["checks"]:
        ok = c["status"] == c["expected"]
        mismatches += not ok
        flag = "" if ok else "   <-- unexpected"
        print(f"{c['name']:<24} {c['status'].upper():<5} (expected {c['expected']}){flag}")
    return EXIT_MISMATCH if mismatches else EXIT_OK


def write_csv(path, run) -> None:
    rows = np.column_stack([run.times, run.q_true, run.q_est, run.err_angle, run.p_trace, run.omega_meas])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def cmd_simulate(args) -> int:
    try:
        sc = load_scenario(_resolve(args.config))
        if sc.observer is None:
            raise ScenarioError(f"{args.config}: scenario has no observer section")
        ocfg = sc.observer.build(args.seed)
    except (ScenarioError, ValueError) as e:
        return _fail(EXIT_CONFIG, f"config error: {e}")
    try:
        run = run_observer(ocfg)
    except NUMERIC_ERRORS as e:
        return _fail(EXIT_NUMERIC, f"numerical failure: {type(e).__name__}: {e}")
    out = Path(args.out)
    write_csv(out, run)
    summary = {"scenario": sc.name, "scenario_digest": sc.digest(), "seed": ocfg.noise.seed,
               **run.summary(ocfg.duration - ocfg.convergence_window)}
    out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def consolidate(docs: list[dict]) -> str:
    rows = []
    for doc in docs:
        for c in doc["checks"]:
            rows.append((doc.get("scenario", ""), c["name"], c["status"], c["max_residual"],
                         c["tolerance"], doc["scenario_digest"]))
    rows.sort(key=lambda r: (r[0], r[1]))
    header = f"{'scenario':<28} {'check':<24} {'status':<6} {'residual/tolerance':<24} digest"
    lines = [header]
    for sc, name, status, res, tol, dig in rows:
        ratio = f"{_num(res)}/{_num(tol)}"
        lines.append(f"{sc:<28} {name:<24} {status.upper():<6} {ratio:<24} {dig[:12]}")
    return "\n".join(lines)


def _num(x) -> str:
    return x if isinstance(x, str) else f"{x:.3g}"


def cmd_report(args) -> int:
    docs = []
    for p in args.paths:
        try:
            docs.append(json.loads(Path(p).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            return _fail(EXIT_CONFIG, f"cannot read report {p}: {e}")
        if not isinstance(docs[-1], dict) or "checks" not in docs[-1]:
            return _fail(EXIT_CONFIG, f"{p}: not a verification report")
    print(consolidate(docs))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linobs", description="Verify linear observed systems and run "
                                 "the S^2 attitude observer.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--tolerance-scale", type=float, default=1.0,
                    help="multiply every check tolerance by this factor")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run verification checks on a scenario")
    v.add_argument("--config", required=True, help="scenario JSON (or name of a bundled scenario)")
    v.add_argument("--suite", default="all", help="comma-separated check names, or all")
    v.add_argument("--out", required=True, help="JSON report path")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="run the attitude observer and write a CSV trace")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="CSV path; a .summary.json is written next to it")
    s.add_argument("--seed", type=int, default=None, help="override the noise seed")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="consolidate JSON reports into a table")
    r.add_argument("paths", nargs="*")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    if not args.tolerance_scale > 0:
        return _fail(EXIT_CONFIG, "config error: --tolerance-scale must be positive")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
