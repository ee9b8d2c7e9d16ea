"""Synthetic panel generator with known ground-truth effects.

The data-generating process is additive fixed effects plus a low-rank factor
structure:

    Y[i, t] = mu + a[i] + b[t] + sum_f L[i, f] F[t, f] + eps[i, t]
              + tau * 1[i treated, t post]

The treated unit's systematic part (unit effect and factor loadings) is a
convex combination of the donors', so the convex hull condition holds by
construction; :func:`hull_violation_panel` breaks it deliberately. All draws
come from named Philox streams keyed by the seed (see :mod:`synthpanel.rng`),
so generation is bit-reproducible and order-independent across workers.
Factor series are standardized Gaussian random walks, which induce the
non-parallel trends that separate synthetic control from plain DiD.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .panel import OUTCOME_GROWTH, PanelDataset
from .rng import stream
from .scm import PredictorSpec, ScmOptions
from .inference import ESTIMATORS, placebo_se, point_estimate

FIRST_PERIOD = 2000  # years are arbitrary labels; fixed for reproducibility


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the simulated panel."""

    n_donors: int = 8
    n_pre: int = 6
    n_post: int = 2
    n_factors: int = 2
    noise_sd: float = 1.0
    true_tau: float = 0.0
    seed: int = 0
    loading_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_donors < 2:
            raise ValidationError("need at least 2 donors")
        if self.n_pre < 2:
            raise ValidationError("need at least 2 pre-treatment periods")
        if self.n_post < 1:
            raise ValidationError("need at least 1 post-treatment period")
        if self.n_factors < 0:
            raise ValidationError("n_factors must be nonnegative")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")


def _systematic_parts(config: DgpConfig):
    """Donor systematic outcomes plus the pieces needed to place the treated unit."""
    m, t = config.n_donors, config.n_pre + config.n_post
    scale = config.loading_scale
    mu = float(stream(config.seed, "grand-mean").normal() * scale)
    alpha = stream(config.seed, "unit-effects").normal(0.0, scale, size=m)
    beta = stream(config.seed, "time-effects").normal(0.0, scale, size=t)
    loadings = stream(config.seed, "loadings").normal(0.0, scale, size=(m, config.n_factors))
    walks = stream(config.seed, "factors").normal(0.0, 1.0, size=(t, config.n_factors))
    factors = np.cumsum(walks, axis=0)
    if config.n_factors:
        factors = (factors - factors.mean(axis=0)) / factors.std(axis=0)
    donors = mu + alpha[:, None] + beta[None, :] + loadings @ factors.T
    return donors, alpha, loadings, factors, mu, beta


def _assemble(config: DgpConfig, treated_systematic: np.ndarray,
              donors_systematic: np.ndarray) -> PanelDataset:
    m, t = config.n_donors, config.n_pre + config.n_post
    noise = stream(config.seed, "noise").normal(0.0, 1.0, size=(m + 1, t)) * config.noise_sd
    outcomes = np.vstack([donors_systematic, treated_systematic[None, :]]) + noise
    outcomes[-1, config.n_pre:] += config.true_tau
    periods = tuple(range(FIRST_PERIOD, FIRST_PERIOD + t))
    units = tuple(f"donor_{i:02d}" for i in range(m)) + ("treated",)
    return PanelDataset(
        units=units,
        periods=periods,
        outcomes=outcomes,
        treated_unit="treated",
        first_treated_period=FIRST_PERIOD + config.n_pre,
        outcome_kind=OUTCOME_GROWTH,
    )


def generate_panel(config: DgpConfig):
    """Simulate a panel whose treated unit lies in the donor convex hull.

    Returns
    -------
    (PanelDataset, float)
        The panel and the true effect it embeds.
    """
    donors, _, _, _, _, _ = _systematic_parts(config)
    hull = stream(config.seed, "hull-weights").dirichlet(np.ones(config.n_donors))
    treated = hull @ donors
    return _assemble(config, treated, donors), float(config.true_tau)


def hull_violation_panel(config: DgpConfig) -> PanelDataset:
    """Simulate a panel whose treated unit sits outside the donor hull.

    The treated unit's effect and loadings are pushed beyond the donor
    maxima, then the whole treated series is raised until it exceeds the
    donor maximum by at least one unit in some pre-treatment period, so the
    hull diagnostic is guaranteed to flag it.
    """
    donors, alpha, loadings, factors, mu, beta = _systematic_parts(config)
    push = 1.0 + abs(config.loading_scale)
    alpha_out = float(alpha.max()) + push
    load_out = loadings.max(axis=0) + push if config.n_factors else loadings[:0].sum(axis=0)
    treated = mu + alpha_out + beta + (load_out @ factors.T if config.n_factors else 0.0)

    panel = _assemble(config, treated, donors)
    pre = panel.pre_mask
    margin = 1.0
    gap = panel.treated_outcomes[pre] - panel.donor_outcomes[:, pre].max(axis=0)
    lift = max(0.0, margin - float(gap.max()))
    if lift > 0.0:
        outcomes = panel.outcomes.copy()
        outcomes[-1] += lift
        panel = PanelDataset(
            units=panel.units,
            periods=panel.periods,
            outcomes=outcomes,
            treated_unit=panel.treated_unit,
            first_treated_period=panel.first_treated_period,
            outcome_kind=panel.outcome_kind,
        )
    return panel


def run_replications(config: DgpConfig, seeds, estimators=("scm", "sdid"),
                     level: float = 0.95,
                     predictor_spec: PredictorSpec | None = None,
                     options: ScmOptions | None = None,
                     threads: int = 1) -> list:
    """Monte-Carlo replications: one row per seed and estimator.

    Each row carries the seed, estimator, true effect, placebo-based
    interval, and whether it covered the truth. Rows are independent across
    seeds (each replication draws from its own streams), so results do not
    depend on worker count or ordering.
    """
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {est!r}")
    rows = []
    for seed in seeds:
        cfg = replace(config, seed=int(seed))
        panel, true_tau = generate_panel(cfg)
        for est in estimators:
            estimate = placebo_se(panel, est, predictor_spec, level, options, threads)
            rows.append({
                "seed": int(seed),
                "estimator": est,
                "true_tau": true_tau,
                "tau_hat": estimate.point,
                "se": estimate.se,
                "ci_low": estimate.ci_low,
                "ci_high": estimate.ci_high,
                "covered": int(estimate.ci_low <= true_tau <= estimate.ci_high),
            })
    return rows


def replication_table(rows) -> str:
    """Flat comma-separated export of :func:`run_replications` rows."""
    buf = io.StringIO()
    columns = ["seed", "estimator", "true_tau", "tau_hat", "se", "ci_low", "ci_high", "covered"]
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns) + "\n")
    return buf.getvalue()
