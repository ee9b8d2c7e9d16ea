"""Placebo and jackknife uncertainty for synthetic control and SDID effects.

With a single treated unit, the placebo variance estimator is the default:
each donor is treated in place (with the true treated unit removed from the
pool), the estimator is re-run, and the spread of those placebo effects
estimates the sampling variance. The leave-one-donor-out jackknife is
offered alongside. In-space placebo significance uses the ratio of post- to
pre-treatment mean squared prediction error.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import EstimationError, ValidationError
from .panel import PanelDataset
from .scm import PredictorSpec, ScmOptions, average_effect, scm_fit
from .sdid import did_estimate, sdid_estimate

ESTIMATORS = ("scm", "sdid", "did")


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate with a normal-approximation confidence interval."""

    point: float
    se: float
    ci_low: float
    ci_high: float
    level: float
    method: str

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "method": self.method,
        }


@dataclass(frozen=True)
class PlaceboDistribution:
    """Placebo effects and MSPE ratios from treating each unit in place."""

    placebo_effects: dict
    actual_effect: float
    mspe_ratios: dict


def z_quantile(level: float) -> float:
    """Two-sided normal quantile; pinned to 1.96 at the conventional 95%."""
    if not 0.0 < level < 1.0:
        raise ValidationError("confidence level must be in (0, 1)")
    if abs(level - 0.95) < 1e-12:
        return 1.96
    return float(norm.ppf(1.0 - (1.0 - level) / 2.0))


def effect_estimate(point: float, se: float, level: float = 0.95,
                    method: str = "placebo") -> EffectEstimate:
    """Build an :class:`EffectEstimate` with ``point -/+ z(level) * se`` bounds."""
    if se < 0:
        raise ValidationError("standard error must be nonnegative")
    z = z_quantile(level)
    return EffectEstimate(
        point=float(point),
        se=float(se),
        ci_low=float(point - z * se),
        ci_high=float(point + z * se),
        level=float(level),
        method=method,
    )


def point_estimate(panel: PanelDataset, estimator: str,
                   predictor_spec: PredictorSpec | None = None,
                   options: ScmOptions | None = None) -> float:
    """Run one estimator on a panel and return its scalar effect.

    For ``scm`` this is the mean post-treatment gap; for ``sdid`` the fitted
    tau; for ``did`` the four-averages estimate.
    """
    if estimator == "scm":
        return average_effect(scm_fit(panel, predictor_spec, options))
    if estimator == "sdid":
        return sdid_estimate(panel).tau_hat
    if estimator == "did":
        return did_estimate(panel)
    raise ValidationError(f"unknown estimator {estimator!r}")


def _map_ordered(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def placebo_panel(panel: PanelDataset, donor: str) -> PanelDataset:
    """Panel with ``donor`` treated in place and the true treated unit removed."""
    return panel.subset(list(panel.donors), donor)


def placebo_effects(panel: PanelDataset, estimator: str,
                    predictor_spec: PredictorSpec | None = None,
                    options: ScmOptions | None = None,
                    threads: int = 1) -> dict:
    """Placebo effect per donor, keyed and ordered by donor id."""
    donors = sorted(panel.donors)

    def one(donor: str) -> float:
        return point_estimate(placebo_panel(panel, donor), estimator, predictor_spec, options)

    values = _map_ordered(one, donors, threads)
    return dict(zip(donors, values))


def placebo_se(panel: PanelDataset, estimator: str,
               predictor_spec: PredictorSpec | None = None,
               level: float = 0.95,
               options: ScmOptions | None = None,
               threads: int = 1) -> EffectEstimate:
    """Placebo-based standard error and confidence interval.

    ``se = sqrt(mean((tau_j - mean(tau_j))^2))`` over the donor placebo
    effects; requires at least two donors.
    """
    if panel.n_donors < 2:
        raise EstimationError("placebo variance needs at least 2 donors")
    point = point_estimate(panel, estimator, predictor_spec, options)
    effects = np.array(list(placebo_effects(panel, estimator, predictor_spec, options, threads).values()))
    se = float(np.sqrt(np.mean((effects - effects.mean()) ** 2)))
    return effect_estimate(point, se, level, method="placebo")


def jackknife_se(panel: PanelDataset, estimator: str,
                 predictor_spec: PredictorSpec | None = None,
                 level: float = 0.95,
                 options: ScmOptions | None = None,
                 threads: int = 1) -> EffectEstimate:
    """Leave-one-donor-out jackknife standard error.

    ``var = (N - 1) / N * sum((tau_(-j) - mean)^2)``; requires at least
    three donors so a valid panel remains after each deletion.
    """
    if panel.n_donors < 3:
        raise EstimationError("jackknife needs at least 3 donors")
    point = point_estimate(panel, estimator, predictor_spec, options)
    donors = sorted(panel.donors)

    def one(donor: str) -> float:
        keep = [u for u in panel.units if u != donor]
        return point_estimate(panel.subset(keep, panel.treated_unit), estimator,
                              predictor_spec, options)

    values = np.array(_map_ordered(one, donors, threads))
    n = values.size
    var = (n - 1) / n * float(np.sum((values - values.mean()) ** 2))
    return effect_estimate(point, float(np.sqrt(var)), level, method="jackknife")


def mspe_ratio_test(panel: PanelDataset,
                    predictor_spec: PredictorSpec | None = None,
                    options: ScmOptions | None = None,
                    threads: int = 1):
    """In-space placebo test on post/pre MSPE ratios.

    The synthetic control is fitted for every unit treated in place (donors
    against the other donors, the true treated unit against its donors). A
    unit with zero pre-treatment MSPE gets an infinite ratio with a warning.
    The p-value is the rank share of the treated unit's ratio:
    ``#(ratio >= treated ratio) / n_units``.

    Returns
    -------
    (PlaceboDistribution, float)
    """
    if panel.n_donors < 2:
        raise EstimationError("the ratio test needs at least 2 donors")

    donors = sorted(panel.donors)
    jobs = [(unit, placebo_panel(panel, unit)) for unit in donors]
    jobs.append((panel.treated_unit, panel))

    def one(job):
        unit, p = job
        fit = scm_fit(p, predictor_spec, options)
        pre_gaps = np.array([g for t, g in fit.gaps.items() if t < p.first_treated_period])
        post_gaps = np.array([g for t, g in fit.gaps.items() if t >= p.first_treated_period])
        pre_mspe = float(np.mean(pre_gaps**2))
        post_mspe = float(np.mean(post_gaps**2))
        if pre_mspe == 0.0:
            warnings.warn(f"unit {unit!r} has zero pre-treatment MSPE; ratio set to inf")
            ratio = float("inf")
        else:
            ratio = post_mspe / pre_mspe
        return unit, ratio, float(np.mean(post_gaps))

    results = _map_ordered(one, jobs, threads)
    ratios = {unit: ratio for unit, ratio, _ in results}
    effects = {unit: eff for unit, ratio, eff in results[:-1]}
    actual_effect = results[-1][2]

    treated_ratio = ratios[panel.treated_unit]
    rank_count = sum(1 for r in ratios.values() if r >= treated_ratio)
    p_value = rank_count / len(ratios)
    dist = PlaceboDistribution(
        placebo_effects=effects,
        actual_effect=actual_effect,
        mspe_ratios=ratios,
    )
    return dist, float(p_value)
