"""Synthetic difference-in-differences and the classical DiD special case.

Unit weights align donor pre-treatment trajectories with the treated unit up
to a level shift (ridge-regularized); time weights align donor pre-treatment
periods with their post-treatment mean. The effect is the double difference
under those weights, computed as a weighted two-way fixed-effects regression
with the direct four-term formula as the cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .panel import PanelDataset
from .simplex import WeightVector, minimize_simplex_qp



@dataclass(frozen=True)
class SdidFit:
    """Fitted synthetic difference-in-differences estimate."""

    donor_units: tuple
    unit_weights: WeightVector
    unit_intercept: float
    pre_periods: tuple
    time_weights: WeightVector
    time_intercept: float
    tau_hat: float
    zeta: float


def regularization_zeta(panel: PanelDataset) -> float:
    """Ridge strength for the unit-weight fit.

    ``zeta = (N_treated * T_post) ** 0.25 * sigma`` with one treated unit,
    where ``sigma`` is the standard deviation of donor first differences
    over pre-treatment periods after removing the common per-transition mean
    (so common period effects do not inflate the noise estimate). The
    variance denominator is ``(n_donors - 1) * (T_pre - 1)``.
    """
    pre = panel.pre_mask
    t_pre = int(pre.sum())
    if t_pre < 2:
        raise EstimationError("regularization needs at least 2 pre-treatment periods")
    diffs = np.diff(panel.donor_outcomes[:, pre], axis=1)  # (m, t_pre - 1)
    m = diffs.shape[0]
    if m < 2:
        raise EstimationError("regularization needs at least 2 donor units")
    centered = diffs - diffs.mean(axis=0, keepdims=True)
    var = float(np.sum(centered**2)) / ((m - 1) * (t_pre - 1))
    t_post = panel.n_periods - t_pre
    return float((1.0 * t_post) ** 0.25 * np.sqrt(var))


def solve_unit_weights(panel: PanelDataset, zeta: float):
    """Donor weights and intercept matching the treated pre-treatment path.

    Minimizes ``sum_pre (w0 + w @ Y_donors - Y_treated)^2 +
    zeta^2 * T_pre * ||w||^2`` over intercept and simplex. The intercept is
    concentrated out by demeaning each unit's pre-treatment series, so the
    solve is a single simplex-constrained least squares.
    """
    pre = panel.pre_mask
    t_pre = int(pre.sum())
    donors_pre = panel.donor_outcomes[:, pre]
    treated_pre = panel.treated_outcomes[pre]

    # Demean per unit (absorbs the intercept), then remove the donor mean of
    # each period from every series; neither step changes the fit term on
    # the simplex, and both make the solve invariant to unit- and
    # period-constant outcome shifts.
    d = donors_pre - donors_pre.mean(axis=1, keepdims=True)
    y = treated_pre - treated_pre.mean()
    period_means = d.mean(axis=0)
    d = d - period_means
    y = y - period_means

    m = d.shape[0]
    A = np.vstack([d.T, float(zeta) * np.sqrt(t_pre) * np.eye(m)])
    b = np.concatenate([y, np.zeros(m)])
    w = WeightVector(minimize_simplex_qp(A, b))
    intercept = float(treated_pre.mean() - w.values @ donors_pre.mean(axis=1))
    return intercept, w


def _min_norm_on_optimal_face(B: np.ndarray, c: np.ndarray, lam_fit: np.ndarray) -> np.ndarray:
    """Minimum-norm point of the optimal face containing ``lam_fit``.

    The face of minimizers of ``||B lam - c||^2`` on the simplex shares one
    fitted value ``p = B lam_fit``; among the simplex points achieving it,
    pick the smallest Euclidean norm via an active-set of min-norm least
    squares solves. Falls back to ``lam_fit`` if the refinement would worsen
    the fit.
    """
    t = lam_fit.size
    p = B @ lam_fit
    M = np.vstack([B, np.ones((1, t))])
    rhs = np.concatenate([p, [1.0]])
    support = np.ones(t, dtype=bool)
    candidate = None
    for _ in range(t + 2):
        sol, *_ = np.linalg.lstsq(M[:, support], rhs, rcond=None)
        if sol.size and np.min(sol) < -1e-12:
            idx = np.where(support)[0]
            support[idx[int(np.argmin(sol))]] = False
            if not support.any():
                return lam_fit
            continue
        candidate = np.zeros(t)
        candidate[support] = np.maximum(sol, 0.0)
        break
    if candidate is None or candidate.sum() <= 0:
        return lam_fit
    candidate /= candidate.sum()
    f_fit = float(np.sum((B @ lam_fit - c) ** 2))
    f_cand = float(np.sum((B @ candidate - c) ** 2))
    if f_cand <= f_fit + 1e-9 * max(1.0, f_fit) and np.dot(candidate, candidate) <= np.dot(lam_fit, lam_fit):
        return candidate
    return lam_fit


def solve_time_weights(panel: PanelDataset):
    """Pre-period weights and intercept matching donor post-treatment means.

    Minimizes ``sum_donors (l0 + Y_pre @ l - mean_post)^2`` over intercept
    and simplex; when the optimum is a face rather than a point, the
    minimum-norm point of that face is returned (deterministic tie-break).
    """
    pre = panel.pre_mask
    donors_pre = panel.donor_outcomes[:, pre]
    post_mean = panel.donor_outcomes[:, ~pre].mean(axis=1)

    row_means = donors_pre.mean(axis=1)
    B = donors_pre - row_means[:, None]
    c = post_mean - row_means
    B = B - B.mean(axis=0, keepdims=True)
    c = c - c.mean()

    lam_fit = minimize_simplex_qp(B, c)
    lam = WeightVector(_min_norm_on_optimal_face(B, c, lam_fit))
    intercept = float(np.mean(post_mean - donors_pre @ lam.values))
    return intercept, lam


def sdid_tau_direct(panel: PanelDataset, unit_weights, time_weights) -> float:
    """Double-difference effect under given unit and time weights.

    ``(mean_post(Y_treated) - lam @ Y_treated_pre)
    - sum_i w_i (mean_post(Y_i) - lam @ Y_i_pre)``. This closed form is the
    oracle for the regression route in :func:`sdid_estimate`.
    """
    pre = panel.pre_mask
    w = np.asarray(unit_weights, dtype=float).reshape(-1)
    lam = np.asarray(time_weights, dtype=float).reshape(-1)
    treated_term = float(panel.treated_outcomes[~pre].mean() - lam @ panel.treated_outcomes[pre])
    donor_terms = panel.donor_outcomes[:, ~pre].mean(axis=1) - panel.donor_outcomes[:, pre] @ lam
    return treated_term - float(w @ donor_terms)


def _tau_weighted_twoway(panel: PanelDataset, w: np.ndarray, lam: np.ndarray) -> float:
    """Effect from the weighted two-way fixed-effects regression.

    Row weights are (unit weight) x (time weight) with the treated unit at
    weight one and post periods at 1/T_post each.
    """
    pre = panel.pre_mask
    n, t = panel.n_units, panel.n_periods
    t_post = int((~pre).sum())
    unit_w = np.concatenate([w, [1.0]])
    time_w = np.empty(t)
    time_w[pre] = lam
    time_w[~pre] = 1.0 / t_post

    rows = []
    targets = []
    sqrt_weights = []
    n_cols = 1 + (n - 1) + (t - 1) + 1  # intercept, unit dummies, time dummies, effect
    for i in range(n):
        for j in range(t):
            wt = unit_w[i] * time_w[j]
            if wt == 0.0:
                continue
            x = np.zeros(n_cols)
            x[0] = 1.0
            if i > 0:
                x[i] = 1.0
            if j > 0:
                x[n - 1 + j] = 1.0
            if i == panel.treated_index and not pre[j]:
                x[-1] = 1.0
            rows.append(x)
            targets.append(panel.outcomes[i, j])
            sqrt_weights.append(np.sqrt(wt))
    X = np.array(rows) * np.array(sqrt_weights)[:, None]
    y = np.array(targets) * np.array(sqrt_weights)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(beta[-1])


def sdid_estimate(
    panel: PanelDataset,
    *,
    zeta: float | None = None,
    unit_weights=None,
    unit_intercept: float | None = None,
    time_weights=None,
    time_intercept: float | None = None,
) -> SdidFit:
    """Estimate the synthetic difference-in-differences effect.

    Weights are solved unless forced through the keyword arguments; forced
    weights must still live on the simplex (forcing both uniform reproduces
    classical DiD). The effect is the weighted two-way regression solution;
    :func:`sdid_tau_direct` is its closed-form cross-check.
    """
    pre = panel.pre_mask
    t_pre = int(pre.sum())

    if unit_weights is None:
        if zeta is None:
            zeta = regularization_zeta(panel)
        unit_intercept_solved, unit_wv = solve_unit_weights(panel, zeta)
        if unit_intercept is None:
            unit_intercept = unit_intercept_solved
    else:
        unit_wv = unit_weights if isinstance(unit_weights, WeightVector) else WeightVector(unit_weights)
        if len(unit_wv) != panel.n_donors:
            raise EstimationError("unit weights must have one entry per donor")
        if zeta is None:
            zeta = 0.0
        if unit_intercept is None:
            unit_intercept = float(
                panel.treated_outcomes[pre].mean()
                - unit_wv.values @ panel.donor_outcomes[:, pre].mean(axis=1)
            )

    if time_weights is None:
        time_intercept_solved, time_wv = solve_time_weights(panel)
        if time_intercept is None:
            time_intercept = time_intercept_solved
    else:
        time_wv = time_weights if isinstance(time_weights, WeightVector) else WeightVector(time_weights)
        if len(time_wv) != t_pre:
            raise EstimationError("time weights must have one entry per pre-treatment period")
        if time_intercept is None:
            time_intercept = float(
                np.mean(
                    panel.donor_outcomes[:, ~pre].mean(axis=1)
                    - panel.donor_outcomes[:, pre] @ time_wv.values
                )
            )

    tau = _tau_weighted_twoway(panel, unit_wv.values, time_wv.values)

    return SdidFit(
        donor_units=panel.donors,
        unit_weights=unit_wv,
        unit_intercept=float(unit_intercept),
        pre_periods=panel.pre_periods,
        time_weights=time_wv,
        time_intercept=float(time_intercept),
        tau_hat=tau,
        zeta=float(zeta),
    )


def did_estimate(panel: PanelDataset) -> float:
    """Classical difference-in-differences via the four averages."""
    pre = panel.pre_mask
    treated = panel.treated_outcomes
    donors_mean = panel.donor_outcomes.mean(axis=0)
    return float(
        (treated[~pre].mean() - treated[pre].mean())
        - (donors_mean[~pre].mean() - donors_mean[pre].mean())
    )
