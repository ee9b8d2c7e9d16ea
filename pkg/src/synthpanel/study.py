"""End-to-end study pipeline: ingest, transform, estimate, infer, report.

``run_study`` executes every stage in memory and returns a single report
object; nothing is written until :func:`write_study_outputs`, so a failing
stage leaves no partial files. The machine-readable JSON and the
human-readable text are rendered from the same dictionary, and the JSON is
byte-stable: the same config and data bytes always produce the same report.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as _tool_version
from .config import StudyConfig
from .errors import DataError, EstimationError, SynthPanelError, ValidationError
from .inference import jackknife_se, placebo_se
from .ingest import EurostatFilter, file_digest, parse_eurostat_tsv, parse_panel_csv
from .panel import OUTCOME_GROWTH, build_panel, diagnose, exclude_units, growth_transform
from .scm import PredictorSpec, ScmOptions, average_effect, scm_fit
from .sdid import did_estimate, sdid_estimate


class StageError(SynthPanelError):
    """An error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SynthPanelError as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class StudyReport:
    """Everything a study produced, in one structure.

    ``to_dict`` fixes the key order, so ``to_json`` is byte-reproducible;
    ``to_text`` renders the same numbers for humans (weights rounded to
    0.1 percentage points there, full precision in the JSON).
    """

    provenance: dict
    study: dict
    panel_summary: dict
    diagnostics: dict
    estimates: dict
    scm: dict | None
    sdid: dict | None
    did: dict | None
    plot_series: list
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "study": self.study,
            "panel": self.panel_summary,
            "diagnostics": self.diagnostics,
            "estimates": self.estimates,
            "scm": self.scm,
            "sdid": self.sdid,
            "did": self.did,
            "plot_series": self.plot_series,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def to_text(self) -> str:
        d = self.to_dict()
        lines = []
        out = lines.append
        out("synthpanel study report")
        out("=" * 60)
        out(f"tool version   : {d['provenance']['tool_version']}")
        out(f"config hash    : {d['provenance']['config_hash']}")
        out(f"data digest    : {d['provenance']['data_digest']}")
        out(f"seed           : {d['provenance']['seed']}")
        out("")
        out(f"treated unit   : {d['study']['treated_unit']}")
        out(f"first treated  : {d['study']['first_treated_period']}")
        out(f"outcome mode   : {d['study']['outcome_mode']}")
        out(f"units          : {d['panel']['n_units']} ({d['panel']['n_donors']} donors)")
        out(f"periods        : {d['panel']['periods'][0]}..{d['panel']['periods'][-1]}")
        if d["panel"]["excluded_units"]:
            out("excluded       : " + "; ".join(
                f"{e['unit']} ({e['reason']})" for e in d["panel"]["excluded_units"]))
        out("")
        out("diagnostics")
        out("-" * 60)
        hull = d["diagnostics"]["convex_hull_by_period"]
        out(f"convex hull ok : {d['diagnostics']['convex_hull_ok']}")
        for period in hull:
            out(f"  {period}: {'ok' if hull[period] else 'violated'}")
        if d["diagnostics"]["pre_rmspe"] is not None:
            out(f"pre-RMSPE      : {d['diagnostics']['pre_rmspe']:.6g}")
        out("")
        out("estimates")
        out("-" * 60)
        for est, block in d["estimates"].items():
            out(f"{est}: effect = {block['effect']:.6g}")
            for method, ci in block["inference"].items():
                out(
                    f"  {method}: se = {ci['se']:.6g}, "
                    f"{int(round(ci['level'] * 100))}% CI = [{ci['ci_low']:.6g}, {ci['ci_high']:.6g}]"
                )
        if d["scm"] is not None:
            out("")
            out("synthetic control weights (rounded to 0.1%)")
            out("-" * 60)
            for unit, w in d["scm"]["donor_weights"].items():
                out(f"  {unit}: {100.0 * w:.1f}%")
            out(f"  pre-RMSPE: {d['scm']['pre_rmspe']:.6g}")
            if d["scm"]["gram_singular"]:
                out("  note: donor predictor matrix is singular; weights may not be unique")
            if d["scm"]["dropped_predictors"]:
                out("  dropped predictors: " + ", ".join(d["scm"]["dropped_predictors"]))
        if d["sdid"] is not None:
            out("")
            out("synthetic difference-in-differences")
            out("-" * 60)
            out(f"  tau: {d['sdid']['tau_hat']:.6g}  (zeta = {d['sdid']['zeta']:.6g})")
            out("  unit weights (rounded to 0.1%): " + ", ".join(
                f"{u} {100.0 * w:.1f}%" for u, w in d["sdid"]["unit_weights"].items()))
            out("  time weights (rounded to 0.1%): " + ", ".join(
                f"{t} {100.0 * w:.1f}%" for t, w in d["sdid"]["time_weights"].items()))
            out("  note: " + d["sdid"]["note"])
        if d["did"] is not None:
            out("")
            out(f"difference-in-differences: tau = {d['did']['tau_hat']:.6g}")
        out("")
        out("actual vs synthetic (gap = actual - synthetic)")
        out("-" * 60)
        for row in d["plot_series"]:
            out(
                f"  {row['period']}: actual {row['actual']:.6g}, "
                f"synthetic {row['synthetic']:.6g}, gap {row['gap']:.6g}"
            )
        if d["warnings"]:
            out("")
            out("warnings")
            out("-" * 60)
            for w in d["warnings"]:
                out(f"  - {w}")
        return "\n".join(lines) + "\n"


def _build_records(config: StudyConfig):
    """Ingest stage: returns (records, digest, warnings)."""
    notes = []
    if config.data_format == "csv":
        records = parse_panel_csv(config.source)
        if config.years is not None:
            lo, hi = config.years
            records = [r for r in records if lo <= r[1] <= hi]
    else:
        filt = EurostatFilter(
            dimensions=config.eurostat_dimensions,
            years=config.years,
            scale=config.eurostat_scale,
            min_value=config.eurostat_min_outcome,
        )
        result = parse_eurostat_tsv(config.source, filt)
        records = result.records
        notes += [f"dropped {geo}: {reason}" for geo, reason in result.dropped]
        if not records:
            raise DataError(f"{config.source}: no usable rows after filtering")
    return records, file_digest(config.source), notes


def run_study(config: StudyConfig, seed: int | None = None, threads: int = 1) -> StudyReport:
    """Execute the full pipeline for one study configuration.

    ``seed`` overrides the configured seed (it is recorded in the report);
    ``threads`` only distributes placebo/jackknife loops and never changes
    results. Stage failures raise :class:`StageError` with the stage tag.
    """
    effective_seed = config.seed if seed is None else int(seed)
    notes: list = []

    records, digest, ingest_notes = _stage("ingest", _build_records, config)
    notes += ingest_notes

    panel = _stage(
        "panel", build_panel, records,
        treated_unit=config.treated_unit,
        first_treated_period=config.first_treated_period,
    )
    if config.excluded_units:
        for unit, reason in config.excluded_units:
            panel = _stage("exclude", exclude_units, panel, [unit], reason)

    if config.outcome_mode == "growth_percent":
        panel = _stage("transform", growth_transform, panel,
                       include_covariates=config.covariate_transform == "growth")

    spec = PredictorSpec(
        outcome_periods=config.outcome_periods,
        covariates=config.covariates,
        standardize=config.standardize,
    )
    options = ScmOptions(seed=effective_seed, multistarts=config.multistarts)

    scm_block = None
    sdid_block = None
    did_block = None
    estimates: dict = {}
    fit = None
    sfit = None

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")

        if "scm" in config.estimators:
            fit = _stage("estimate", scm_fit, panel, spec, options)
            estimates["scm"] = {"effect": average_effect(fit), "inference": {}}
            scm_block = {
                "donor_weights": fit.donor_weights.as_mapping(fit.donor_units),
                "predictor_weights": fit.predictor_weights.as_mapping(fit.predictor_labels),
                "dropped_predictors": list(fit.dropped_predictors),
                "pre_rmspe": fit.pre_rmspe,
                "gram_singular": fit.gram_singular,
                "gaps": {str(t): g for t, g in fit.gaps.items()},
                "synthetic_series": {str(t): s for t, s in fit.synthetic_series.items()},
            }
        if "sdid" in config.estimators:
            sfit = _stage("estimate", sdid_estimate, panel)
            estimates["sdid"] = {"effect": sfit.tau_hat, "inference": {}}
            sdid_block = {
                "tau_hat": sfit.tau_hat,
                "zeta": sfit.zeta,
                "unit_weights": sfit.unit_weights.as_mapping(sfit.donor_units),
                "unit_intercept": sfit.unit_intercept,
                "time_weights": sfit.time_weights.as_mapping([str(p) for p in sfit.pre_periods]),
                "time_intercept": sfit.time_intercept,
                "note": "outcome-only fit; covariates are not used by this estimator",
            }
        if "did" in config.estimators:
            did_block = {"tau_hat": _stage("estimate", did_estimate, panel)}
            estimates["did"] = {"effect": did_block["tau_hat"], "inference": {}}

        methods = ("placebo", "jackknife") if config.inference == "both" else (config.inference,)
        for est in config.estimators:
            for method in methods:
                runner = placebo_se if method == "placebo" else jackknife_se
                ci = _stage("inference", runner, panel, est, spec, config.ci_level, options, threads)
                estimates[est]["inference"][method] = ci.to_dict()

        seen = set()
        for warning in caught:
            message = str(warning.message)
            if message not in seen:
                seen.add(message)
                notes.append(message)

    diag = _stage("diagnose", diagnose, panel, pre_rmspe=fit.pre_rmspe if fit is not None else None)
    for period, ok in diag.convex_hull_by_period.items():
        if not ok:
            notes.append(f"convex hull violated in pre-treatment period {period}")

    if fit is not None:
        synthetic = [fit.synthetic_series[p] for p in panel.periods]
    elif sfit is not None:
        synthetic = list(sfit.unit_intercept + sfit.unit_weights.values @ panel.donor_outcomes)
    else:
        synthetic = [float(np.mean(panel.donor_outcomes[:, j])) for j in range(panel.n_periods)]
    plot_series = [
        {
            "period": int(p),
            "actual": float(panel.treated_outcomes[j]),
            "synthetic": float(synthetic[j]),
            "gap": float(panel.treated_outcomes[j] - synthetic[j]),
        }
        for j, p in enumerate(panel.periods)
    ]

    return StudyReport(
        provenance={
            "tool": "synthpanel",
            "tool_version": _tool_version,
            "config_hash": config.config_hash,
            "data_digest": digest,
            "seed": effective_seed,
        },
        study={
            "treated_unit": panel.treated_unit,
            "first_treated_period": panel.first_treated_period,
            "outcome_mode": config.outcome_mode,
            "estimators": list(config.estimators),
            "inference": config.inference,
            "ci_level": config.ci_level,
        },
        panel_summary={
            "n_units": panel.n_units,
            "n_donors": panel.n_donors,
            "units": list(panel.units),
            "periods": [int(p) for p in panel.periods],
            "excluded_units": [{"unit": u, "reason": r} for u, r in panel.exclusions],
        },
        diagnostics=diag.to_dict(),
        estimates=estimates,
        scm=scm_block,
        sdid=sdid_block,
        did=did_block,
        plot_series=plot_series,
        warnings=notes,
    )


# ---------------------------------------------------------------------------
# plot emission


def plot_series_table(report: StudyReport) -> str:
    """Comma-separated actual/synthetic/gap series."""
    lines = ["period,actual,synthetic,gap"]
    for row in report.plot_series:
        lines.append(
            f"{row['period']},{row['actual']!r},{row['synthetic']!r},{row['gap']!r}"
        )
    return "\n".join(lines) + "\n"


def plot_series_svg(report: StudyReport, width: int = 720, height: int = 440) -> str:
    """Two-line SVG chart: actual and synthetic, with a treatment marker.

    Structurally minimal on purpose: exactly two ``<polyline>`` elements and
    one vertical treatment-start ``<line>``.
    """
    rows = report.plot_series
    periods = [row["period"] for row in rows]
    values = [row["actual"] for row in rows] + [row["synthetic"] for row in rows]
    lo, hi = min(values), max(values)
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.08 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    margin = 56.0
    inner_w = width - 2 * margin
    inner_h = height - 2 * margin

    def sx(p):
        if len(periods) == 1:
            return margin + inner_w / 2
        return margin + inner_w * (p - periods[0]) / (periods[-1] - periods[0])

    def sy(v):
        return margin + inner_h * (1.0 - (v - lo) / (hi - lo))

    def pts(key):
        return " ".join(f"{sx(r['period']):.2f},{sy(r[key]):.2f}" for r in rows)

    t0 = report.study["first_treated_period"]
    marker_x = sx(t0) - (sx(periods[1]) - sx(periods[0])) / 2 if len(periods) > 1 else sx(t0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<path d="M {margin} {margin} V {height - margin} H {width - margin}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
        f'<line class="treatment-start" x1="{marker_x:.2f}" y1="{margin}" '
        f'x2="{marker_x:.2f}" y2="{height - margin}" stroke="#888" '
        'stroke-width="1.5" stroke-dasharray="6 4"/>',
        f'<polyline class="actual" points="{pts("actual")}" fill="none" '
        'stroke="#1a1a1a" stroke-width="2"/>',
        f'<polyline class="synthetic" points="{pts("synthetic")}" fill="none" '
        'stroke="#c0392b" stroke-width="2" stroke-dasharray="8 4"/>',
    ]
    for p in periods:
        parts.append(
            f'<text x="{sx(p):.2f}" y="{height - margin + 18:.2f}" font-size="11" '
            f'text-anchor="middle" fill="#333">{p}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        v = lo + frac * (hi - lo)
        parts.append(
            f'<text x="{margin - 6:.2f}" y="{sy(v) + 4:.2f}" font-size="11" '
            f'text-anchor="end" fill="#333">{v:.3g}</text>'
        )
    parts.append(
        f'<text x="{margin:.2f}" y="{margin - 18:.2f}" font-size="12" fill="#1a1a1a">'
        f'{report.study["treated_unit"]} (solid) vs synthetic (dashed)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot_series(report: StudyReport, fmt: str, out_dir) -> list:
    """Write the plot series in the requested format; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "table":
        path = out_dir / "series.csv"
        path.write_text(plot_series_table(report), encoding="utf-8")
        return [path]
    if fmt == "svg":
        path = out_dir / "series.svg"
        path.write_text(plot_series_svg(report), encoding="utf-8")
        return [path]
    raise ValidationError(f"unknown plot format {fmt!r}; use table or svg")


def write_study_outputs(report: StudyReport, out_dir) -> list:
    """Write report.json, report.txt, series.csv, and series.svg."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    rendered = [
        (out_dir / "report.json", report.to_json()),
        (out_dir / "report.txt", report.to_text()),
        (out_dir / "series.csv", plot_series_table(report)),
        (out_dir / "series.svg", plot_series_svg(report)),
    ]
    for path, content in rendered:
        path.write_text(content, encoding="utf-8")
        paths.append(path)
    return paths


def report_from_json(path) -> StudyReport:
    """Rebuild a report object from a saved report.json (for re-plotting)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid report JSON: {exc}") from exc
    try:
        return StudyReport(
            provenance=payload["provenance"],
            study=payload["study"],
            panel_summary=payload["panel"],
            diagnostics=payload["diagnostics"],
            estimates=payload["estimates"],
            scm=payload["scm"],
            sdid=payload["sdid"],
            did=payload["did"],
            plot_series=payload["plot_series"],
            warnings=payload["warnings"],
        )
    except KeyError as exc:
        raise DataError(f"{path} is missing report key {exc}") from None
