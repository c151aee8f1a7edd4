"""Command-line front end: ``sitstab <command> [--config PATH | --preset NAME] [options]``.

Exit status is 0 on success, 2 for configuration errors (unreadable or
invalid documents, unknown presets, unwritable output directory) and 3 for
numerical failures, including failed certification checks.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import io
from .certificates import CertifySpec, certify, kappa_bar
from .controllers import k_bounds, lambda_min, theta_min
from .experiments import (
    COMPARISON_PARAMS,
    LAMBDA_GRID,
    THETA_GRID,
    ComparisonSpec,
    comparison_table,
    global_stability_evidence,
    robustness_study,
    run_scenario,
)
from .integrate import IntegrationError
from .model import constant_release_threshold, offspring_number_R0

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("thresholds", "simulate", "compare", "robustness", "evidence", "certify")
NEEDS = {"simulate": "scenario", "compare": "comparison", "robustness": "robustness", "evidence": "evidence",
         "certify": "certify"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sitstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="YAML run document")
        src.add_argument("--preset", help="built-in scenario name")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
        p.add_argument("--seed", type=int, help="override the document's seed")
        p.add_argument("--step", type=float, help="override the integration step (days)")
        p.add_argument("--t-final", type=float, dest="t_final", help="override the horizon (days)")
    return parser


def _apply_overrides(doc: dict, kind: str, args) -> dict:
    block = doc.setdefault(kind, {}) if kind else None
    if block is None:
        return doc
    if args.seed is not None and kind != "comparison":
        block["seed"] = args.seed
    if args.step is not None:
        block["step"] = args.step
    if args.t_final is not None:
        block["t_max" if kind == "comparison" else "t_final"] = args.t_final
    return doc


def _document(args) -> dict:
    if args.preset:
        return io.preset_document(args.preset)
    if args.config:
        return io.load_document(args.config)
    return {"schema_version": io.SCHEMA_VERSION}


def _out_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise io.ConfigError([f"cannot create output directory {path}: {exc.strerror}"]) from exc
    return path


def _fmt(x):
    return "never" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def cmd_thresholds(rd, out):
    p = rd.params
    lo, hi = k_bounds(p)
    rows = [("R0", float(offspring_number_R0(p))), ("theta_min", float(theta_min(p))), ("k_lower", float(lo)),
            ("k_upper", float(hi)), ("lambda_min", float(lambda_min(p))), ("kappa_bar", float(kappa_bar(p))),
            ("U_star", float(constant_release_threshold(p)))]
    for name, value in rows:
        print(f"{name} = {value:.10g}")
    io.write_columns_csv(out / "thresholds.csv", ["name", "value"], list(zip(*rows)))
    return EXIT_OK


def cmd_simulate(rd, out):
    report, traj = run_scenario(rd.study)
    io.write_trajectory_csv(out / "trajectory.csv", traj)
    E, M, F, Ms = report.final_state
    summary = [("intervention_time", report.intervention_time), ("cost", report.cost), ("E_final", E),
               ("M_final", M), ("F_final", F), ("Ms_final", Ms), ("clamp_count", traj.clamp_count)]
    for name, value in summary:
        print(f"{name} = {_fmt(value)}")
    io.write_columns_csv(out / "summary.csv", ["name", "value"],
                         [[n for n, _ in summary], [float("nan") if v is None else v for _, v in summary]])
    return EXIT_OK


def cmd_compare(rd, out, specs):
    for spec in specs:
        rows = comparison_table(spec)
        io.write_table_csv(out / f"table_{spec.family}.csv", rows)
        print(f"{spec.family}: gain, T (days), cost")
        for r in rows:
            T = "never" if r.T_days is None else f"{r.T_days:.1f}"
            print(f"  {r.gain:g}, {T}, {_fmt(r.cost)}")
    return EXIT_OK


def cmd_robustness(rd, out):
    spec, controller = rd.study
    res = robustness_study(spec, controller)
    runs = _out_dir(out / "runs")
    for i in range(spec.n_runs):
        io.write_columns_csv(runs / f"run_{i:04d}.csv", ["t", "log_EMF"], [res.times, res.log_population[:, i]])
    names = sorted(res.params)
    cols = [list(range(spec.n_runs))] + [res.params[n] for n in names]
    cols += [res.z0[:, j] for j in range(4)] + [res.converged, res.failed]
    io.write_columns_csv(out / "summary.csv", ["run", *names, "E0", "M0", "F0", "Ms0", "converged", "failed"],
                         [[str(v) for v in cols[0]], *cols[1:]])
    for i, msg in sorted(res.messages.items()):
        print(f"run {i} failed: {msg}", file=sys.stderr)
    print(f"converged {int(res.converged.sum())} of {spec.n_runs} ({100 * res.converged_fraction:.1f}%), "
          f"failed {int(res.failed.sum())}")
    return EXIT_OK


def cmd_evidence(rd, out):
    spec, controller = rd.study
    res = global_stability_evidence(spec, controller)
    header = ["t"] + [f"run_{i}" for i in range(spec.n_ics)]
    io.write_columns_csv(out / "evidence_wild.csv", header, [res.times, *res.wild_norms.T])
    io.write_columns_csv(out / "evidence_full.csv", header, [res.times, *res.norms.T])
    print(f"converged {int(res.converged.sum())} of {spec.n_ics}; "
          f"counterexample candidates: {res.counterexample_candidates or 'none'}")
    return EXIT_OK


def cmd_certify(rd, out):
    checks = certify(rd.params, rd.study or CertifySpec())
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    io.write_columns_csv(out / "certify.csv", ["check", "passed", "detail"],
                         [[c.name for c in checks], [c.passed for c in checks], [c.detail for c in checks]])
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


def run(args) -> int:
    doc = _document(args)
    kind = NEEDS.get(args.command)
    compare_both = args.command == "compare" and "comparison" not in doc
    if kind and kind not in doc and not compare_both and kind != "certify":
        raise io.ConfigError([f"<document>: '{args.command}' needs a '{kind}' block"])
    if not compare_both:
        _apply_overrides(doc, kind if (kind in doc or kind == "certify") else None, args)
    rd = io.parse_document(doc)
    if args.command != "thresholds" and rd.kind not in (None, kind):
        raise io.ConfigError([f"<document>: '{args.command}' cannot run a '{rd.kind}' block"])
    out = _out_dir(args.out)
    if args.command == "thresholds":
        return cmd_thresholds(rd, out)
    if args.command == "simulate":
        return cmd_simulate(rd, out)
    if args.command == "compare":
        if compare_both:
            p = rd.params if "params" in doc else COMPARISON_PARAMS
            step = args.step if args.step is not None else 0.01
            t_max = args.t_final if args.t_final is not None else 3000.0
            specs = [ComparisonSpec("lambda", LAMBDA_GRID, p, step=step, t_max=t_max),
                     ComparisonSpec("theta", THETA_GRID, p, step=step, t_max=t_max)]
        else:
            specs = [rd.study]
        return cmd_compare(rd, out, specs)
    if args.command == "robustness":
        return cmd_robustness(rd, out)
    if args.command == "evidence":
        return cmd_evidence(rd, out)
    return cmd_certify(rd, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except io.ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
