import numpy as np
import pytest

from synthpanel import (
    OUTCOME_GROWTH,
    ValidationError,
    build_panel,
    diagnose,
    exclude_units,
    growth_transform,
)
from conftest import panel_from_matrix, random_panel


def _records(rows):
    return [(u, p, y) for u, p, y in rows]


class TestBuildPanel:
    def test_minimal_balanced(self):
        recs = _records([
            ("a", 1, 1.0), ("a", 2, 2.0), ("a", 3, 3.0),
            ("t", 1, 1.5), ("t", 2, 2.5), ("t", 3, 3.5),
        ])
        panel = build_panel(recs, "t", 3)
        assert panel.units == ("a", "t")
        assert panel.periods == (1, 2, 3)
        assert panel.outcomes.shape == (2, 3)
        assert panel.treated_unit == "t"
        assert panel.pre_periods == (1, 2)
        assert panel.post_periods == (3,)

    def test_missing_cell_named(self):
        recs = _records([
            ("a", 1, 1.0), ("a", 2, 2.0), ("a", 3, 3.0),
            ("t", 1, 1.5), ("t", 3, 3.5),
        ])
        with pytest.raises(ValidationError, match=r"\('t', 2\)"):
            build_panel(recs, "t", 3)

    def test_duplicate_cell(self):
        recs = _records([("a", 1, 1.0), ("a", 1, 2.0)])
        with pytest.raises(ValidationError, match="duplicate"):
            build_panel(recs, "t", 2)

    def test_no_treated_declared(self):
        recs = _records([("a", 1, 1.0)])
        with pytest.raises(ValidationError, match="treated"):
            build_panel(recs, "", 2)

    def test_treated_not_in_records(self):
        recs = _records([("a", 1, 1.0), ("a", 2, 2.0), ("a", 3, 3.0)])
        with pytest.raises(ValidationError, match="not present"):
            build_panel(recs, "zzz", 3)

    def test_company_shape(self):
        periods = range(2015, 2023)
        units = ["OEBB", "DB", "HZ", "MAV", "SBB", "VR", "ZSSK"]
        recs = [(u, p, 100.0 + i + 0.5 * j)
                for i, u in enumerate(units) for j, p in enumerate(periods)]
        panel = build_panel(recs, "OEBB", 2021)
        assert panel.n_units == 7
        assert panel.periods == tuple(periods)
        assert panel.units[-1] == "OEBB"
        assert panel.pre_periods == tuple(range(2015, 2021))
        assert panel.post_periods == (2021, 2022)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        units = ["b", "a", "t", "c"]
        recs = [(u, p, float(rng.normal()), {"g": float(rng.normal())})
                for u in units for p in (1, 2, 3, 4)]
        p1 = build_panel(recs, "t", 3)
        shuffled = list(recs)
        rng.shuffle(shuffled)
        p2 = build_panel(shuffled, "t", 3)
        assert p1.units == p2.units
        assert p1.periods == p2.periods
        np.testing.assert_array_equal(p1.outcomes, p2.outcomes)
        np.testing.assert_array_equal(p1.covariates["g"], p2.covariates["g"])

    def test_needs_two_pre_periods(self):
        recs = _records([("a", 1, 1.0), ("a", 2, 2.0), ("t", 1, 1.0), ("t", 2, 2.0)])
        with pytest.raises(ValidationError, match="pre-treatment"):
            build_panel(recs, "t", 2)

    def test_covariate_must_be_balanced(self):
        recs = [("a", 1, 1.0, {"g": 1.0}), ("a", 2, 2.0, {}), ("a", 3, 3.0, {"g": 1.0}),
                ("t", 1, 1.0, {"g": 1.0}), ("t", 2, 2.0, {"g": 1.0}), ("t", 3, 3.0, {"g": 1.0})]
        with pytest.raises(ValidationError, match="covariate 'g'"):
            build_panel(recs, "t", 3)


class TestGrowthTransform:
    def test_direct_arithmetic(self):
        panel = panel_from_matrix(
            np.array([[100.0, 110.0, 99.0, 99.0], [100.0, 110.0, 99.0, 99.0]]), n_pre=3)
        g = growth_transform(panel)
        np.testing.assert_allclose(g.treated_outcomes[:2], [10.0, -10.0])
        assert g.outcome_kind == OUTCOME_GROWTH
        assert g.n_periods == panel.n_periods - 1

    def test_constant_series(self):
        panel = panel_from_matrix(np.full((2, 4), 5.0), n_pre=3)
        np.testing.assert_allclose(growth_transform(panel).outcomes, 0.0)

    def test_halving(self):
        panel = panel_from_matrix(
            np.array([[200.0, 100.0, 50.0, 25.0], [200.0, 100.0, 50.0, 25.0]]), n_pre=3)
        np.testing.assert_allclose(growth_transform(panel).outcomes, -50.0)

    def test_nonpositive_denominator_named(self):
        panel = panel_from_matrix(np.array([[1.0, 0.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]]), n_pre=3)
        with pytest.raises(ValidationError, match="'d00'.*2001"):
            growth_transform(panel)

    def test_requires_levels(self):
        panel = panel_from_matrix(np.full((2, 5), 2.0), n_pre=3)
        g = growth_transform(panel)
        with pytest.raises(ValidationError, match="level"):
            growth_transform(g)

    def test_reconstruction_roundtrip(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n_units = int(rng.integers(2, 6))
            n_periods = int(rng.integers(4, 9))
            Y = rng.uniform(10.0, 500.0, size=(n_units, n_periods))
            panel = panel_from_matrix(Y, n_pre=n_periods - 1)
            g = growth_transform(panel)
            rebuilt = np.empty_like(Y)
            rebuilt[:, 0] = Y[:, 0]
            for j in range(1, n_periods):
                rebuilt[:, j] = rebuilt[:, j - 1] * (1.0 + g.outcomes[:, j - 1] / 100.0)
            np.testing.assert_allclose(rebuilt, Y, rtol=1e-10)

    def test_covariates_sliced_or_transformed(self):
        cov = {"g": np.array([[1.0, 2.0, 4.0, 8.0], [1.0, 3.0, 9.0, 27.0]])}
        panel = panel_from_matrix(
            np.array([[100.0, 110.0, 121.0, 133.1], [10.0, 20.0, 40.0, 80.0]]),
            n_pre=3, covariates=cov)
        sliced = growth_transform(panel)
        np.testing.assert_allclose(sliced.covariates["g"], [[2.0, 4.0, 8.0], [3.0, 9.0, 27.0]])
        transformed = growth_transform(panel, include_covariates=True)
        np.testing.assert_allclose(transformed.covariates["g"],
                                   [[100.0, 100.0, 100.0], [200.0, 200.0, 200.0]])


class TestExcludeUnits:
    def test_exclude_donor(self, company_levels_panel):
        panel = company_levels_panel
        out = exclude_units(panel, ["d00"], "overlapping policy")
        assert out.n_units == panel.n_units - 1
        assert "d00" not in out.units
        assert out.exclusions == (("d00", "overlapping policy"),)
        np.testing.assert_array_equal(out.treated_outcomes, panel.treated_outcomes)

    def test_exclude_empty_is_identity(self, company_levels_panel):
        out = exclude_units(company_levels_panel, [], "n/a")
        assert out is company_levels_panel

    def test_exclude_unknown(self, company_levels_panel):
        with pytest.raises(ValidationError, match="not in panel"):
            exclude_units(company_levels_panel, ["nope"], "x")

    def test_exclude_treated_forbidden(self, company_levels_panel):
        with pytest.raises(ValidationError, match="treated"):
            exclude_units(company_levels_panel, ["treated"], "x")

    def test_exclusion_logged_in_diagnostics(self, company_levels_panel):
        out = exclude_units(company_levels_panel, ["d01"], "why not")
        report = diagnose(out)
        assert ("d01", "why not") in report.excluded_units


class TestDiagnose:
    def test_all_inside_hull(self):
        Y = np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0], [2.0, 3.0, 4.0]])
        report = diagnose(panel_from_matrix(Y, n_pre=2))
        assert report.convex_hull_ok
        assert all(report.convex_hull_by_period.values())
        assert report.balance_ok

    def test_one_period_above_all_donors(self):
        Y = np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0], [2.0, 9.0, 4.0]])
        report = diagnose(panel_from_matrix(Y, n_pre=2, periods_start=2000))
        assert report.convex_hull_by_period == {2000: True, 2001: False}
        assert not report.convex_hull_ok

    def test_single_donor_equality_band(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            Y = rng.normal(size=(2, 4))
            if rng.random() < 0.5:
                Y[1, :2] = Y[0, :2]  # force exact match in the pre window
            panel = panel_from_matrix(Y, n_pre=2)
            report = diagnose(panel)
            for j, period in enumerate(panel.pre_periods):
                lo = Y[:1, j].min()
                hi = Y[:1, j].max()
                assert report.convex_hull_by_period[period] == (lo <= Y[1, j] <= hi)

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            panel = random_panel(rng)
            report = diagnose(panel)
            donors = panel.donor_outcomes
            for j, period in enumerate(panel.periods):
                if period >= panel.first_treated_period:
                    continue
                expected = donors[:, j].min() <= panel.treated_outcomes[j] <= donors[:, j].max()
                assert report.convex_hull_by_period[period] == expected

    def test_never_blocks(self):
        Y = np.array([[1.0, 1.0, 1.0], [9.0, 9.0, 9.0]])
        report = diagnose(panel_from_matrix(Y, n_pre=2))  # far outside the hull
        assert not report.convex_hull_ok  # reported, not raised
