"""Balanced unit-by-year panel data: construction, validation, transforms.

A panel holds one treated unit (stored last, by convention) and a donor pool
of comparison units, observed over consecutive integer periods. All
operations return new objects; arrays inside a panel are read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

OUTCOME_LEVEL = "level"
OUTCOME_GROWTH = "growth_percent"
_OUTCOME_KINDS = (OUTCOME_LEVEL, OUTCOME_GROWTH)


def _frozen_array(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"expected array of shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PanelDataset:
    """Balanced outcome matrix with covariates and a single treated unit.

    Attributes
    ----------
    units : tuple of str
        Unit labels, donors first, treated unit last.
    periods : tuple of int
        Strictly increasing integer periods (years).
    outcomes : ndarray, shape (n_units, n_periods)
        Outcome values; no missing cells.
    covariates : dict of str -> ndarray
        Named covariate matrices with the same shape as ``outcomes``.
    treated_unit : str
        Label of the treated unit (must equal ``units[-1]``).
    first_treated_period : int
        First post-treatment period; every earlier period is pre-treatment.
    outcome_kind : str
        Either ``"level"`` or ``"growth_percent"``.
    exclusions : tuple of (str, str)
        Units removed via :func:`exclude_units` with the recorded reason.
    """

    units: tuple
    periods: tuple
    outcomes: np.ndarray = field(repr=False)
    covariates: dict = field(repr=False, default_factory=dict)
    treated_unit: str = ""
    first_treated_period: int = 0
    outcome_kind: str = OUTCOME_LEVEL
    exclusions: tuple = ()

    def __post_init__(self) -> None:
        units = tuple(str(u) for u in self.units)
        periods = tuple(int(p) for p in self.periods)
        if len(set(units)) != len(units):
            raise ValidationError("duplicate unit labels")
        if len(units) < 2:
            raise ValidationError("panel needs the treated unit and at least one donor")
        if any(b <= a for a, b in zip(periods, periods[1:])):
            raise ValidationError("periods must be strictly increasing")
        outcomes = _frozen_array(self.outcomes, shape=(len(units), len(periods)))
        if not np.all(np.isfinite(outcomes)):
            raise ValidationError("outcome matrix contains non-finite cells")
        covariates = {}
        for name, mat in dict(self.covariates).items():
            cov = _frozen_array(mat, shape=outcomes.shape)
            if not np.all(np.isfinite(cov)):
                raise ValidationError(f"covariate {name!r} contains non-finite cells")
            covariates[str(name)] = cov
        if not self.treated_unit:
            raise ValidationError("no treated unit declared")
        if str(self.treated_unit) != units[-1]:
            raise ValidationError("treated unit must be stored last")
        t0 = int(self.first_treated_period)
        n_pre = sum(1 for p in periods if p < t0)
        if not (periods[0] < t0 <= periods[-1]):
            raise ValidationError(
                f"first treated period {t0} must lie inside ({periods[0]}, {periods[-1]}]"
            )
        if n_pre < 2:
            raise ValidationError("need at least 2 pre-treatment periods")
        if self.outcome_kind not in _OUTCOME_KINDS:
            raise ValidationError(f"unknown outcome kind {self.outcome_kind!r}")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "treated_unit", str(self.treated_unit))
        object.__setattr__(self, "first_treated_period", t0)
        object.__setattr__(
            self, "exclusions", tuple((str(u), str(r)) for u, r in self.exclusions)
        )

    # -- basic geometry -------------------------------------------------
    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def treated_index(self) -> int:
        return self.n_units - 1

    @property
    def donors(self) -> tuple:
        return self.units[:-1]

    @property
    def n_donors(self) -> int:
        return self.n_units - 1

    @property
    def pre_mask(self) -> np.ndarray:
        return np.array([p < self.first_treated_period for p in self.periods])

    @property
    def post_mask(self) -> np.ndarray:
        return ~self.pre_mask

    @property
    def pre_periods(self) -> tuple:
        return tuple(p for p in self.periods if p < self.first_treated_period)

    @property
    def post_periods(self) -> tuple:
        return tuple(p for p in self.periods if p >= self.first_treated_period)

    @property
    def donor_outcomes(self) -> np.ndarray:
        return self.outcomes[:-1]

    @property
    def treated_outcomes(self) -> np.ndarray:
        return self.outcomes[-1]

    def period_index(self, period: int) -> int:
        try:
            return self.periods.index(int(period))
        except ValueError:
            raise ValidationError(f"period {period} not in panel") from None

    def unit_index(self, unit: str) -> int:
        try:
            return self.units.index(str(unit))
        except ValueError:
            raise ValidationError(f"unit {unit!r} not in panel") from None

    # -- derived panels -------------------------------------------------
    def subset(self, units, treated_unit: str, exclusions=None) -> "PanelDataset":
        """New panel restricted to ``units`` with ``treated_unit`` marked treated.

        Infrastructure for exclusions and placebo reassignment; the treated
        unit is moved to the last position.
        """
        units = [str(u) for u in units]
        treated_unit = str(treated_unit)
        if treated_unit not in units:
            raise ValidationError(f"treated unit {treated_unit!r} not among selected units")
        ordered = sorted(u for u in units if u != treated_unit) + [treated_unit]
        rows = [self.unit_index(u) for u in ordered]
        return PanelDataset(
            units=tuple(ordered),
            periods=self.periods,
            outcomes=self.outcomes[rows],
            covariates={name: mat[rows] for name, mat in self.covariates.items()},
            treated_unit=treated_unit,
            first_treated_period=self.first_treated_period,
            outcome_kind=self.outcome_kind,
            exclusions=self.exclusions if exclusions is None else tuple(exclusions),
        )


def build_panel(records, treated_unit: str, first_treated_period: int,
                outcome_kind: str = OUTCOME_LEVEL) -> PanelDataset:
    """Assemble a balanced panel from long-form records.

    Parameters
    ----------
    records : iterable
        Tuples ``(unit, period, outcome)`` or ``(unit, period, outcome,
        covariate_map)``.
    treated_unit : str
        Label of the treated unit; moved to the last row.
    first_treated_period : int
        First post-treatment period.
    outcome_kind : str
        What the outcome column measures.

    The result is deterministic: donors sorted lexicographically, periods
    ascending, treated unit last. Shuffling ``records`` cannot change it.

    Raises
    ------
    ValidationError
        On duplicate cells, missing cells (all of them are named), unknown
        treated unit, or unbalanced covariates.
    """
    records = list(records)
    if not records:
        raise ValidationError("no records supplied")
    if treated_unit is None or treated_unit == "":
        raise ValidationError("no treated unit declared")

    cells: dict = {}
    cov_cells: dict = {}
    cov_names: set = set()
    for rec in records:
        if len(rec) == 3:
            unit, period, outcome = rec
            covs = {}
        elif len(rec) == 4:
            unit, period, outcome, covs = rec
            covs = dict(covs or {})
        else:
            raise ValidationError(f"record {rec!r} must have 3 or 4 fields")
        key = (str(unit), int(period))
        if key in cells:
            raise ValidationError(f"duplicate cell for unit {key[0]!r}, period {key[1]}")
        cells[key] = float(outcome)
        cov_cells[key] = {str(k): float(v) for k, v in covs.items()}
        cov_names.update(cov_cells[key])

    units = sorted({u for u, _ in cells})
    periods = sorted({p for _, p in cells})
    treated_unit = str(treated_unit)
    if treated_unit not in units:
        raise ValidationError(f"treated unit {treated_unit!r} not present in records")
    ordered = [u for u in units if u != treated_unit] + [treated_unit]

    missing = [(u, p) for u in ordered for p in periods if (u, p) not in cells]
    if missing:
        shown = ", ".join(f"({u!r}, {p})" for u, p in missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise ValidationError(f"unbalanced panel, missing cells: {shown}{more}")

    outcomes = np.array([[cells[(u, p)] for p in periods] for u in ordered])
    covariates = {}
    for name in sorted(cov_names):
        missing_cov = [(u, p) for u in ordered for p in periods if name not in cov_cells[(u, p)]]
        if missing_cov:
            shown = ", ".join(f"({u!r}, {p})" for u, p in missing_cov[:10])
            raise ValidationError(f"covariate {name!r} missing for cells: {shown}")
        covariates[name] = np.array([[cov_cells[(u, p)][name] for p in periods] for u in ordered])

    return PanelDataset(
        units=tuple(ordered),
        periods=tuple(periods),
        outcomes=outcomes,
        covariates=covariates,
        treated_unit=treated_unit,
        first_treated_period=int(first_treated_period),
        outcome_kind=outcome_kind,
    )


def growth_transform(panel: PanelDataset, include_covariates: bool = False) -> PanelDataset:
    """Convert level outcomes to year-over-year percent growth.

    ``G[i][t] = (Y[i][t] - Y[i][t-1]) / Y[i][t-1] * 100``; the first period
    is dropped so the panel stays dense. Covariates are sliced to the
    remaining periods, or growth-transformed too when ``include_covariates``
    is set.

    Raises
    ------
    ValidationError
        If the panel is not in levels, or any denominator cell is zero or
        negative (the offending cell is named).
    """
    if panel.outcome_kind != OUTCOME_LEVEL:
        raise ValidationError("growth transform requires level outcomes")

    def to_growth(mat: np.ndarray, what: str) -> np.ndarray:
        denom = mat[:, :-1]
        bad = np.argwhere(denom <= 0.0)
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"non-positive {what} denominator at unit {panel.units[i]!r}, "
                f"period {panel.periods[j]}"
            )
        return (mat[:, 1:] - denom) / denom * 100.0

    outcomes = to_growth(panel.outcomes, "outcome")
    covariates = {}
    for name, mat in panel.covariates.items():
        covariates[name] = to_growth(mat, f"covariate {name!r}") if include_covariates else mat[:, 1:]

    return PanelDataset(
        units=panel.units,
        periods=panel.periods[1:],
        outcomes=outcomes,
        covariates=covariates,
        treated_unit=panel.treated_unit,
        first_treated_period=panel.first_treated_period,
        outcome_kind=OUTCOME_GROWTH,
        exclusions=panel.exclusions,
    )


def exclude_units(panel: PanelDataset, unit_ids, reason: str) -> PanelDataset:
    """Remove donor units from the pool, recording the reason.

    Excluding the treated unit or an unknown unit is an error; an empty list
    returns an identical panel.
    """
    unit_ids = [str(u) for u in unit_ids]
    if not unit_ids:
        return panel
    for u in unit_ids:
        if u == panel.treated_unit:
            raise ValidationError("cannot exclude the treated unit")
        if u not in panel.units:
            raise ValidationError(f"unit {u!r} not in panel")
    keep = [u for u in panel.units if u not in set(unit_ids)]
    exclusions = panel.exclusions + tuple((u, str(reason)) for u in unit_ids)
    return panel.subset(keep, panel.treated_unit, exclusions=exclusions)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Assumption checks for a panel; informational, never blocks estimation.

    ``convex_hull_by_period[t]`` is True iff the treated outcome at
    pre-treatment period ``t`` lies between the donor minimum and maximum.
    """

    convex_hull_by_period: dict
    convex_hull_ok: bool
    balance_ok: bool
    excluded_units: tuple
    pre_rmspe: float | None = None

    def to_dict(self) -> dict:
        return {
            "convex_hull_by_period": {str(k): bool(v) for k, v in self.convex_hull_by_period.items()},
            "convex_hull_ok": bool(self.convex_hull_ok),
            "balance_ok": bool(self.balance_ok),
            "excluded_units": [{"unit": u, "reason": r} for u, r in self.excluded_units],
            "pre_rmspe": None if self.pre_rmspe is None else float(self.pre_rmspe),
        }


def diagnose(panel: PanelDataset, pre_rmspe: float | None = None) -> DiagnosticsReport:
    """Run assumption diagnostics: per-pre-period convex hull flags and balance.

    With a single donor the hull degenerates to an equality band. A fitted
    pre-treatment RMSPE can be attached for reporting.
    """
    donors = panel.donor_outcomes
    treated = panel.treated_outcomes
    hull = {}
    for j, p in enumerate(panel.periods):
        if p >= panel.first_treated_period:
            continue
        lo = float(np.min(donors[:, j]))
        hi = float(np.max(donors[:, j]))
        hull[p] = bool(lo <= treated[j] <= hi)
    return DiagnosticsReport(
        convex_hull_by_period=hull,
        convex_hull_ok=all(hull.values()),
        balance_ok=bool(np.all(np.isfinite(panel.outcomes))),
        excluded_units=panel.exclusions,
        pre_rmspe=pre_rmspe,
    )
