"""Synthetic control estimation.

Donor weights are chosen on the unit simplex so that a weighted average of
donor predictors matches the treated unit's predictors; predictor-importance
weights are selected by an outer search that minimizes the pre-treatment
outcome fit. Post-treatment gaps between the treated unit and its synthetic
counterpart estimate the effect.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import EstimationError, ValidationError
from .panel import PanelDataset
from .rng import stream
from .simplex import WeightVector, minimize_simplex_qp


class PredictorWeights(WeightVector):
    """Nonnegative importance weights over predictor rows, summing to one."""


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictors enter the donor-weight fit.

    Attributes
    ----------
    outcome_periods : (int, int) or None
        Inclusive year range of pre-treatment outcomes used as predictor
        rows; None means all pre-treatment periods.
    covariates : tuple of str
        Covariate names, each aggregated to its pre-treatment mean per unit.
    standardize : bool
        Scale each predictor row to zero mean / unit variance across units
        before the weight fit (raw rows are kept for reporting).
    """

    outcome_periods: tuple | None = None
    covariates: tuple = ()
    standardize: bool = True


@dataclass(frozen=True)
class PredictorMatrix:
    """Predictor rows for the treated unit and the donor pool."""

    labels: tuple
    treated: np.ndarray = field(repr=False)
    donors: np.ndarray = field(repr=False)  # shape (k, n_donors)
    raw_treated: np.ndarray = field(repr=False)
    raw_donors: np.ndarray = field(repr=False)
    dropped: tuple = ()

    @property
    def k(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class ScmOptions:
    """Knobs for the outer predictor-importance search."""

    seed: int = 0
    multistarts: int = 10
    max_evals_per_start: int = 0  # 0 means the default budget of 80 * k
    threads: int = 1


@dataclass(frozen=True)
class ScmFit:
    """Fitted synthetic control.

    ``gaps[t]`` is treated minus synthetic at period ``t`` for every panel
    period; ``pre_rmspe`` is the root mean square of the pre-treatment gaps.
    ``gram_singular`` flags a singular donor predictor Gram matrix, in which
    case the reported weights are the deterministic solver output but may
    not be the unique optimum.
    """

    donor_units: tuple
    donor_weights: WeightVector
    predictor_weights: PredictorWeights
    predictor_labels: tuple
    dropped_predictors: tuple
    gaps: dict
    synthetic_series: dict
    pre_rmspe: float
    mspe_pre: float
    first_treated_period: int
    gram_singular: bool = False


def build_predictor_matrix(panel: PanelDataset, spec: PredictorSpec) -> PredictorMatrix:
    """Assemble predictor rows: pre-treatment outcomes plus covariate means.

    Zero-variance rows are dropped with a warning rather than an error.
    """
    pre = [p for p in panel.pre_periods]
    if spec.outcome_periods is not None:
        lo, hi = int(spec.outcome_periods[0]), int(spec.outcome_periods[1])
        pre = [p for p in pre if lo <= p <= hi]
        if not pre:
            raise ValidationError(
                f"outcome predictor range {lo}-{hi} selects no pre-treatment periods"
            )
    rows = []
    labels = []
    for p in pre:
        j = panel.period_index(p)
        rows.append(panel.outcomes[:, j])
        labels.append(f"outcome:{p}")
    pre_cols = [panel.period_index(p) for p in panel.pre_periods]
    for name in spec.covariates:
        if name not in panel.covariates:
            raise ValidationError(f"covariate {name!r} not in panel")
        rows.append(panel.covariates[name][:, pre_cols].mean(axis=1))
        labels.append(f"covariate:{name}")

    kept_rows = []
    kept_labels = []
    dropped = []
    for label, row in zip(labels, rows):
        if float(np.std(row)) == 0.0:
            dropped.append(label)
            warnings.warn(f"predictor {label} has zero variance and was dropped")
            continue
        kept_labels.append(label)
        kept_rows.append(row)
    if not kept_rows:
        raise EstimationError("all predictor rows have zero variance")

    raw = np.array(kept_rows)  # (k, n_units), treated in the last column
    if spec.standardize:
        mean = raw.mean(axis=1, keepdims=True)
        sd = raw.std(axis=1, ddof=1, keepdims=True)
        scaled = (raw - mean) / sd
    else:
        scaled = raw
    return PredictorMatrix(
        labels=tuple(kept_labels),
        treated=scaled[:, -1].copy(),
        donors=scaled[:, :-1].copy(),
        raw_treated=raw[:, -1].copy(),
        raw_donors=raw[:, :-1].copy(),
        dropped=tuple(dropped),
    )


def solve_weights_fixed_v(X_treated: np.ndarray, X_donors: np.ndarray,
                          v: PredictorWeights | np.ndarray,
                          w0: np.ndarray | None = None) -> WeightVector:
    """Donor weights minimizing the v-weighted predictor mismatch.

    Solves ``argmin_w sum_k v_k (X_treated[k] - X_donors[k] @ w)^2`` on the
    simplex. The problem is always feasible; ties resolve to the
    deterministic solver path from the uniform start.
    """
    X_treated = np.asarray(X_treated, dtype=float).reshape(-1)
    X_donors = np.asarray(X_donors, dtype=float)
    if X_donors.ndim != 2 or X_donors.shape[0] != X_treated.size:
        raise ValidationError("X_donors must have one row per predictor")
    v_arr = np.asarray(v, dtype=float).reshape(-1)
    if v_arr.size != X_treated.size:
        raise ValidationError("v must have one weight per predictor row")
    root = np.sqrt(v_arr)[:, None]
    w = minimize_simplex_qp(root * X_donors, (root[:, 0]) * X_treated, w0=w0)
    return WeightVector(w)


def _softmax(u: np.ndarray) -> np.ndarray:
    z = u - np.max(u)
    e = np.exp(z)
    return e / e.sum()


def _pre_outcome_mspe(panel: PanelDataset, w: np.ndarray) -> float:
    pre = panel.pre_mask
    synth = w @ panel.donor_outcomes[:, pre]
    resid = panel.treated_outcomes[pre] - synth
    return float(np.mean(resid**2))


def select_predictor_weights(
    panel: PanelDataset,
    spec: PredictorSpec | None = None,
    options: ScmOptions | None = None,
    matrix: PredictorMatrix | None = None,
):
    """Nested optimization over predictor-importance weights.

    The outer search runs Nelder-Mead over a softmax parameterization of the
    importance weights, restarting from seeded random points; the inner
    problem is :func:`solve_weights_fixed_v`. The objective is the
    pre-treatment outcome MSPE of the resulting donor weights. Multistarts
    may run on several threads; the result is merged by best objective then
    lowest start index, so it does not depend on scheduling.

    Returns
    -------
    (PredictorWeights, WeightVector, float)
        Importance weights, donor weights, and the achieved pre-treatment
        outcome MSPE.
    """
    spec = spec or PredictorSpec()
    options = options or ScmOptions()
    pm = matrix if matrix is not None else build_predictor_matrix(panel, spec)
    k = pm.k
    if k == 1:
        v = PredictorWeights(np.ones(1))
        w = solve_weights_fixed_v(pm.treated, pm.donors, v)
        return v, w, _pre_outcome_mspe(panel, w.values)

    def objective(u: np.ndarray) -> float:
        w = solve_weights_fixed_v(pm.treated, pm.donors, _softmax(u))
        return _pre_outcome_mspe(panel, w.values)

    budget = options.max_evals_per_start or 80 * k

    def run_start(start: int):
        if start == 0:
            u0 = np.zeros(k)
        else:
            u0 = stream(options.seed, "scm-v-search", start).normal(size=k)
        res = minimize(
            objective,
            u0,
            method="Nelder-Mead",
            options={"maxfev": budget, "xatol": 1e-4, "fatol": 1e-10, "adaptive": True},
        )
        return float(res.fun), start, res.x

    starts = range(max(1, options.multistarts))
    if options.threads > 1:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            results = list(pool.map(run_start, starts))
    else:
        results = [run_start(s) for s in starts]
    _, _, u_best = min(results, key=lambda r: (r[0], r[1]))

    v = PredictorWeights(_softmax(u_best))
    w = solve_weights_fixed_v(pm.treated, pm.donors, v)
    return v, w, _pre_outcome_mspe(panel, w.values)


def scm_fit(panel: PanelDataset, spec: PredictorSpec | None = None,
            options: ScmOptions | None = None) -> ScmFit:
    """Fit the synthetic control and compute per-period gaps.

    The synthetic series is the donor-weighted outcome in every period; the
    gap is treated minus synthetic, and post-treatment gaps estimate the
    effect.
    """
    spec = spec or PredictorSpec()
    options = options or ScmOptions()
    pm = build_predictor_matrix(panel, spec)
    v, w, mspe = select_predictor_weights(panel, spec, options, matrix=pm)

    synthetic = w.values @ panel.donor_outcomes
    gaps = panel.treated_outcomes - synthetic
    pre = panel.pre_mask
    pre_rmspe = float(np.sqrt(np.mean(gaps[pre] ** 2)))

    weighted_donors = np.sqrt(v.values)[:, None] * pm.donors
    gram_singular = bool(
        np.linalg.matrix_rank(weighted_donors) < min(weighted_donors.shape)
    )
    return ScmFit(
        donor_units=panel.donors,
        donor_weights=w,
        predictor_weights=v,
        predictor_labels=pm.labels,
        dropped_predictors=pm.dropped,
        gaps={int(p): float(g) for p, g in zip(panel.periods, gaps)},
        synthetic_series={int(p): float(s) for p, s in zip(panel.periods, synthetic)},
        pre_rmspe=pre_rmspe,
        mspe_pre=mspe,
        first_treated_period=panel.first_treated_period,
        gram_singular=gram_singular,
    )


def average_effect(fit: ScmFit, post_periods=None) -> float:
    """Unweighted mean gap over the requested post-treatment periods."""
    if post_periods is None:
        post_periods = [p for p in fit.gaps if p >= fit.first_treated_period]
    post_periods = [int(p) for p in post_periods]
    if not post_periods:
        raise ValidationError("no post-treatment periods to average over")
    for p in post_periods:
        if p not in fit.gaps:
            raise ValidationError(f"period {p} not in fit")
        if p < fit.first_treated_period:
            raise ValidationError(f"period {p} is pre-treatment")
    return float(np.mean([fit.gaps[p] for p in post_periods]))
