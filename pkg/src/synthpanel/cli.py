"""Command-line entry point.

Subcommands: ``validate`` (ingest and diagnose only), ``run`` (full study),
``placebo`` (inference detail dump), ``simulate`` (Monte-Carlo harness), and
``plot`` (re-emit figures from a saved report). Exit codes: 0 success,
1 validation error, 2 estimation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import parse_study_config
from .errors import DataError, EstimationError, ValidationError
from .inference import mspe_ratio_test, placebo_effects, point_estimate
from .panel import build_panel, diagnose, exclude_units, growth_transform
from .scm import PredictorSpec, ScmOptions
from .simulate import DgpConfig, replication_table, run_replications
from .study import (
    StageError,
    _build_records,
    emit_plot_series,
    report_from_json,
    run_study,
    write_study_outputs,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ESTIMATION = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthpanel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "ingest the data and run diagnostics, estimating nothing"),
        ("run", "run the full study and write report and figures"),
        ("placebo", "dump per-donor placebo effects and the MSPE ratio test"),
        ("simulate", "run the Monte-Carlo harness from the [simulate] section"),
        ("plot", "re-emit figures from a saved report.json"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="study configuration file")
        cmd.add_argument("--out", default=None, help="output directory (default: config output dir)")
        cmd.add_argument("--seed", type=int, default=None, help="override the configured seed")
        cmd.add_argument("--threads", type=int, default=1, help="worker threads for placebo loops")
    return parser


def _prepare_panel(config):
    records, _, notes = _build_records(config)
    panel = build_panel(records, config.treated_unit, config.first_treated_period)
    for unit, reason in config.excluded_units:
        panel = exclude_units(panel, [unit], reason)
    if config.outcome_mode == "growth_percent":
        panel = growth_transform(panel, include_covariates=config.covariate_transform == "growth")
    return panel, notes


def _cmd_validate(config, args) -> int:
    panel, notes = _prepare_panel(config)
    report = diagnose(panel)
    print(f"panel ok: {panel.n_units} units ({panel.n_donors} donors), "
          f"periods {panel.periods[0]}..{panel.periods[-1]}")
    print(f"convex hull ok: {report.convex_hull_ok}")
    for period, ok in report.convex_hull_by_period.items():
        print(f"  {period}: {'ok' if ok else 'violated'}")
    for unit, reason in report.excluded_units:
        print(f"excluded {unit}: {reason}")
    for note in notes:
        print(f"warning: {note}")
    return EXIT_OK


def _cmd_run(config, args) -> int:
    report = run_study(config, seed=args.seed, threads=args.threads)
    out_dir = Path(args.out) if args.out else config.output_dir
    paths = write_study_outputs(report, out_dir)
    for est, block in report.estimates.items():
        print(f"{est}: effect = {block['effect']:.6g}")
    print("wrote: " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def _cmd_placebo(config, args) -> int:
    panel, _ = _prepare_panel(config)
    seed = config.seed if args.seed is None else args.seed
    spec = PredictorSpec(
        outcome_periods=config.outcome_periods,
        covariates=config.covariates,
        standardize=config.standardize,
    )
    options = ScmOptions(seed=seed, multistarts=config.multistarts)
    payload: dict = {"estimators": {}}
    for est in config.estimators:
        effects = placebo_effects(panel, est, spec, options, threads=args.threads)
        actual = point_estimate(panel, est, spec, options)
        payload["estimators"][est] = {"actual_effect": actual, "placebo_effects": effects}
        print(f"{est}: actual effect = {actual:.6g}")
        for unit, value in effects.items():
            print(f"  placebo {unit}: {value:.6g}")
    if "scm" in config.estimators:
        dist, p_value = mspe_ratio_test(panel, spec, options, threads=args.threads)
        payload["mspe_ratio_test"] = {
            "ratios": {u: (None if r == float("inf") else r) for u, r in dist.mspe_ratios.items()},
            "p_value": p_value,
        }
        print(f"MSPE ratio test p-value: {p_value:.4g}")
    out_dir = Path(args.out) if args.out else config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "placebo.json"
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote: {path}")
    return EXIT_OK


def _cmd_simulate(config, args) -> int:
    if not config.simulate:
        raise ValidationError("config has no [simulate] section")
    sim = config.simulate
    base_seed = config.seed if args.seed is None else args.seed
    dgp = DgpConfig(
        n_donors=sim["n_donors"], n_pre=sim["n_pre"], n_post=sim["n_post"],
        n_factors=sim["n_factors"], noise_sd=sim["noise_sd"],
        true_tau=sim["true_tau"], loading_scale=sim["loading_scale"], seed=0,
    )
    seeds = [base_seed + i for i in range(sim["replications"])]
    rows = run_replications(dgp, seeds, estimators=tuple(sim["estimators"]),
                            level=config.ci_level, threads=args.threads)
    out_dir = Path(args.out) if args.out else config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "replications.csv"
    path.write_text(replication_table(rows), encoding="utf-8")
    for est in sim["estimators"]:
        sub = [r for r in rows if r["estimator"] == est]
        coverage = sum(r["covered"] for r in sub) / len(sub)
        print(f"{est}: {len(sub)} replications, coverage {coverage:.3f}")
    print(f"wrote: {path}")
    return EXIT_OK


def _cmd_plot(config, args) -> int:
    report_path = config.output_dir / "report.json"
    report = report_from_json(report_path)
    out_dir = Path(args.out) if args.out else config.output_dir
    paths = emit_plot_series(report, "table", out_dir) + emit_plot_series(report, "svg", out_dir)
    print("wrote: " + ", ".join(str(p) for p in paths))
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "placebo": _cmd_placebo,
    "simulate": _cmd_simulate,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_study_config(args.config)
        return _COMMANDS[args.command](config, args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.cause
        if isinstance(cause, DataError):
            return EXIT_IO
        if isinstance(cause, EstimationError):
            return EXIT_ESTIMATION
        return EXIT_VALIDATION
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
