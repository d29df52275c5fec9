"""Command-line surface: simulate, estimate, benchmark, report.

Exit codes: 0 success, 1 usage error, 2 data or estimation error. Output
files are written atomically, so a failing command leaves nothing partial
behind.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import tempfile

from .benchmark import (
    BenchmarkResult,
    SweepResult,
    pearson_correlation,
    rmse,
    run_benchmark,
    variance_sweep,
)
from .config import dump_json, load_policy, load_scenario, load_simulate_config
from .core import ESTIMATOR_BLEND, REPORT_CSV_COLUMNS
from .errors import EstimationError, OpekitError
from .estimators import estimate_all
from .logio import LogReader, write_log
from .propensity import PropensityConfig
from .reward_model import KIND_RIDGE_LINEAR, KIND_TABULAR_MEAN, fit_cross_fitted
from .simulate import generate_log


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting(2)."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="opekit", description="Counterfactual evaluation of bandit policies from logged feedback.")
    sub = parser.add_subparsers(dest="command", metavar="{simulate,estimate,benchmark,report}")

    p_sim = sub.add_parser("simulate", parents=[], help="generate a synthetic log from a config")
    p_sim.add_argument("--config", required=True, help="simulate config JSON")
    p_sim.add_argument("--out", required=True, help="log file to write (.jsonl or .csv)")
    p_sim.add_argument("--format", choices=["jsonl", "csv"], default=None, help="override format detection")

    p_est = sub.add_parser("estimate", help="run estimators over a log")
    p_est.add_argument("--log", required=True, help="input log file")
    p_est.add_argument("--format", choices=["jsonl", "csv"], default=None)
    p_est.add_argument("--target-policy", required=True, help="target policy JSON")
    p_est.add_argument("--estimators", default="ips,snips", help="comma list of ips,snips,dm,dr,blend")
    p_est.add_argument(
        "--propensity",
        choices=["logged", "epsilon-greedy-recovery", "exploration-only"],
        default="logged",
        help="where logging propensities come from",
    )
    p_est.add_argument("--epsilon", type=float, default=None, help="exploration rate for recovery modes (defaults to the log header)")
    p_est.add_argument("--clip", type=float, default=None, help="importance weight cap (> 1)")
    p_est.add_argument("--on-support-violation", choices=["error", "skip"], default="error")
    p_est.add_argument("--base-policy", default=None, help="base logging policy JSON (recovery modes)")
    p_est.add_argument("--reward-model", choices=[KIND_TABULAR_MEAN, KIND_RIDGE_LINEAR], default=KIND_TABULAR_MEAN)
    p_est.add_argument("--ridge-lambda", type=float, default=1.0)
    p_est.add_argument("--buckets", type=int, default=64, help="context buckets for the tabular reward model")
    p_est.add_argument("--lenient", action="store_true", help="skip malformed rows instead of aborting")
    p_est.add_argument("--batch-size", type=int, default=65536)
    p_est.add_argument("--out", required=True, help="report file (.json or .csv)")

    p_bench = sub.add_parser("benchmark", help="run a benchmark scenario")
    p_bench.add_argument("--scenario", required=True, help="scenario JSON")
    p_bench.add_argument("--out-dir", required=True)
    p_bench.add_argument("--workers", type=int, default=None, help=f"parallel cells (default ${'{'}OPEKIT_THREADS{'}'} or 1)")

    p_rep = sub.add_parser("report", help="summarize benchmark results")
    p_rep.add_argument("--results", required=True, help="results.csv from `opekit benchmark`")
    p_rep.add_argument("--variance", default=None, help="variance.csv from `opekit benchmark`")
    p_rep.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_simulate(args) -> int:
    cfg = load_simulate_config(args.config)
    log = generate_log(cfg.environment, cfg.logging_policy, cfg.n, cfg.seed)
    write_log(args.out, cfg.log_header(), log, args.format or cfg.format)
    print(f"wrote {cfg.n} records to {args.out}")
    return 0


def _format_report_table(reports: dict) -> str:
    lines = [
        f"{'estimator':<10}{'estimate':>12}{'std_error':>12}{'n':>10}{'ess':>12}{'clip_frac':>11}{'skipped':>9}"
    ]
    for name, r in reports.items():
        lines.append(
            f"{name:<10}{r.point_estimate:>12.4f}{r.standard_error:>12.4f}{r.n:>10d}"
            f"{r.effective_sample_size:>12.1f}{r.clip_fraction:>11.4f}{r.skipped_records:>9d}"
        )
    return "\n".join(lines)


def _write_reports(path: str, reports: dict, log_path: str) -> None:
    if path.lower().endswith(".csv"):
        directory = os.path.dirname(os.path.abspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(REPORT_CSV_COLUMNS)
                for r in reports.values():
                    writer.writerow([repr(v) if isinstance(v, float) else v for v in r.to_csv_row()])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    else:
        dump_json(path, {"log": log_path, "reports": [r.to_dict() for r in reports.values()]})


def _cmd_estimate(args) -> int:
    reader = LogReader(args.log, args.format, strict=not args.lenient, batch_size=args.batch_size)
    header = reader.header
    target = load_policy(args.target_policy)
    names = [e.strip().upper() for e in args.estimators.split(",") if e.strip()]

    epsilon = args.epsilon if args.epsilon is not None else header.epsilon
    propensity = PropensityConfig(
        mode=args.propensity,
        epsilon=epsilon if args.propensity != "logged" else None,
        action_count=header.action_count if args.propensity != "logged" else None,
        clip_max=args.clip,
        support_violation=args.on_support_violation,
    )
    base_policy = load_policy(args.base_policy) if args.base_policy else None

    model = None
    if any(e in ("DM", "DR", ESTIMATOR_BLEND) for e in names):
        model = fit_cross_fitted(
            reader.iter_batches(),
            args.reward_model,
            args.ridge_lambda,
            action_count=header.action_count,
            bucket_count=args.buckets,
        )
    reports = estimate_all(
        reader.iter_batches(),
        target,
        names,
        propensity_config=propensity,
        reward_model=model,
        logging_policy=base_policy,
        batch_size=args.batch_size,
    )
    if reader.skipped_rows:
        print(f"note: skipped {reader.skipped_rows} malformed rows", file=sys.stderr)
        for message in reader.row_errors:
            print(f"  {message}", file=sys.stderr)
    print(_format_report_table(reports))
    _write_reports(args.out, reports, args.log)
    return 0


def _cmd_benchmark(args) -> int:
    scenario = load_scenario(args.scenario)
    os.makedirs(args.out_dir, exist_ok=True)
    result = run_benchmark(scenario, workers=args.workers)
    results_path = os.path.join(args.out_dir, "results.csv")
    result.write_csv(results_path)
    print(f"wrote {results_path}")
    if scenario.replications >= 30:
        sweep = variance_sweep(scenario, workers=args.workers)
        variance_path = os.path.join(args.out_dir, "variance.csv")
        sweep.write_csv(variance_path)
        print(f"wrote {variance_path}")
    else:
        print("note: variance sweep skipped (needs >= 30 replications)", file=sys.stderr)
    return 0


def _summarize_results(result: BenchmarkResult) -> list[dict]:
    groups: dict[tuple, list[tuple[float, float]]] = {}
    for row in result.rows:
        if row["error"] or not math.isfinite(row["estimate"]):
            continue
        groups.setdefault((row["estimator"], row["sample_size"]), []).append(
            (row["estimate"], row["oracle_value"])
        )
    summary = []
    for (estimator, size) in sorted(groups):
        pairs = groups[(estimator, size)]
        estimates = [p[0] for p in pairs]
        oracles = [p[1] for p in pairs]
        try:
            corr = pearson_correlation(estimates, oracles)
        except (EstimationError, OpekitError):
            corr = math.nan
        summary.append(
            {
                "estimator": estimator,
                "sample_size": size,
                "n_points": len(pairs),
                "pearson": corr,
                "rmse": rmse(estimates, oracles),
            }
        )
    return summary


def _cmd_report(args) -> int:
    from . import plots

    result = BenchmarkResult.read_csv(args.results)
    os.makedirs(args.out, exist_ok=True)
    summary = _summarize_results(result)
    if not summary:
        raise EstimationError("results file holds no usable rows")

    summary_path = os.path.join(args.out, "summary.csv")
    directory = os.path.dirname(os.path.abspath(summary_path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["estimator", "sample_size", "n_points", "pearson", "rmse"])
            for row in summary:
                writer.writerow(
                    [
                        row["estimator"],
                        row["sample_size"],
                        row["n_points"],
                        repr(row["pearson"]),
                        repr(row["rmse"]),
                    ]
                )
        os.replace(tmp, summary_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    print(f"wrote {summary_path}")

    largest = max(row["sample_size"] for row in result.rows)
    points = {}
    for row in result.rows:
        if row["sample_size"] == largest and not row["error"] and math.isfinite(row["estimate"]):
            oracle, est = points.setdefault(row["estimator"], ([], []))
            oracle.append(row["oracle_value"])
            est.append(row["estimate"])
    scatter_path = os.path.join(args.out, "scatter_estimates.svg")
    plots.scatter_estimates_vs_oracle(points, scatter_path)
    print(f"wrote {scatter_path}")

    series = {}
    for row in summary:
        sizes, corrs = series.setdefault(row["estimator"], ([], []))
        sizes.append(row["sample_size"])
        corrs.append(row["pearson"])
    corr_path = os.path.join(args.out, "correlation_by_n.svg")
    plots.correlation_by_sample_size(series, corr_path)
    print(f"wrote {corr_path}")

    if args.variance:
        sweep = SweepResult.read_csv(args.variance)
        cells: dict[tuple, list[float]] = {}
        for row in sweep.rows:
            if math.isfinite(row["variance"]):
                cells.setdefault((row["estimator"], row["sample_size"]), []).append(row["variance"])
        var_series: dict = {}
        for (estimator, size) in sorted(cells):
            values = cells[(estimator, size)]
            sizes, variances = var_series.setdefault(estimator, ([], []))
            sizes.append(size)
            variances.append(sum(values) / len(values))
        variance_path = os.path.join(args.out, "variance_by_n.svg")
        plots.variance_curves(var_series, variance_path)
        print(f"wrote {variance_path}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "benchmark": _cmd_benchmark,
    "report": _cmd_report,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        code = exc.code or 0
        return int(code) if isinstance(code, int) else 1
    except OpekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
