import numpy as np
import pytest

from synthpanel import (
    PredictorSpec,
    ScmOptions,
    ValidationError,
    average_effect,
    build_predictor_matrix,
    growth_transform,
    scm_fit,
    select_predictor_weights,
    solve_weights_fixed_v,
)
from synthpanel.scm import _pre_outcome_mspe
from synthpanel.simulate import DgpConfig, generate_panel
from conftest import panel_from_matrix, random_panel

FAST = ScmOptions(seed=0, multistarts=2, max_evals_per_start=150)


class TestPredictorMatrix:
    def test_six_pre_outcomes_plus_two_covariates(self, company_levels_panel):
        rng = np.random.default_rng(1)
        covs = {
            "gdp_growth": rng.normal(2, 1, size=(5, 8)),
            "pop_growth": rng.normal(0.5, 0.2, size=(5, 8)),
        }
        panel = panel_from_matrix(company_levels_panel.outcomes, n_pre=6,
                                  periods_start=2015, covariates=covs)
        pm = build_predictor_matrix(panel, PredictorSpec(covariates=("gdp_growth", "pop_growth")))
        assert pm.k == 8
        assert pm.labels[:6] == tuple(f"outcome:{y}" for y in range(2015, 2021))
        assert pm.labels[6:] == ("covariate:gdp_growth", "covariate:pop_growth")
        assert pm.donors.shape == (8, 4)

    def test_outcomes_only_range(self, company_levels_panel):
        pm = build_predictor_matrix(company_levels_panel,
                                    PredictorSpec(outcome_periods=(2016, 2018)))
        assert pm.k == 3

    def test_constant_covariate_dropped_with_warning(self, company_levels_panel):
        covs = {"flat": np.full((5, 8), 3.0)}
        panel = panel_from_matrix(company_levels_panel.outcomes, n_pre=6,
                                  periods_start=2015, covariates=covs)
        with pytest.warns(UserWarning, match="zero variance"):
            pm = build_predictor_matrix(panel, PredictorSpec(covariates=("flat",)))
        assert pm.k == 6
        assert pm.dropped == ("covariate:flat",)

    def test_standardization(self, company_levels_panel):
        pm = build_predictor_matrix(company_levels_panel, PredictorSpec())
        stacked = np.column_stack([pm.donors, pm.treated])
        np.testing.assert_allclose(stacked.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(stacked.std(axis=1, ddof=1), 1.0, atol=1e-12)
        raw = np.column_stack([pm.raw_donors, pm.raw_treated])
        assert not np.allclose(raw.mean(axis=1), 0.0)

    def test_empty_range_rejected(self, company_levels_panel):
        with pytest.raises(ValidationError):
            build_predictor_matrix(company_levels_panel,
                                   PredictorSpec(outcome_periods=(1990, 1995)))


class TestSolveWeightsFixedV:
    def test_unique_interior(self):
        w = solve_weights_fixed_v(np.array([2.0]), np.array([[1.0, 3.0]]), np.array([1.0]))
        np.testing.assert_allclose(w.values, [0.5, 0.5], atol=1e-10)

    def test_perfect_fit_vertex(self):
        X_d = np.array([[1.0, 4.0], [2.0, 1.0], [3.0, 0.0]])
        w = solve_weights_fixed_v(X_d[:, 0], X_d, np.full(3, 1 / 3))
        np.testing.assert_allclose(w.values, [1.0, 0.0], atol=1e-10)

    def test_exact_midpoint(self):
        w = solve_weights_fixed_v(np.array([2.0, 3.0]),
                                  np.array([[1.0, 3.0], [2.0, 4.0]]),
                                  np.array([0.5, 0.5]))
        np.testing.assert_allclose(w.values, [0.5, 0.5], atol=1e-10)
        resid = np.array([2.0, 3.0]) - np.array([[1.0, 3.0], [2.0, 4.0]]) @ w.values
        assert float(resid @ resid) < 1e-20

    def test_against_grid_oracle(self):
        # Exhaustive 0.001-step scan of the 3-donor simplex as the oracle.
        rng = np.random.default_rng(12)
        step = 0.001
        w1_grid = np.arange(0.0, 1.0 + step / 2, step)
        for _ in range(10):
            k = int(rng.integers(1, 5))
            X_d = rng.normal(size=(k, 3))
            x_t = rng.normal(size=k)
            v = rng.dirichlet(np.ones(k))
            w = solve_weights_fixed_v(x_t, X_d, v)
            obj = float(np.sum(v * (x_t - X_d @ w.values) ** 2))
            best = np.inf
            for a in w1_grid:
                b = np.arange(0.0, 1.0 - a + step / 2, step)
                grid = np.stack([np.full_like(b, a), b, 1.0 - a - b])
                r = x_t[:, None] - X_d @ grid
                best = min(best, float(np.min(np.sum(v[:, None] * r * r, axis=0))))
            assert obj <= best + 1e-4


class TestSelectPredictorWeights:
    def test_single_predictor_forced(self, company_levels_panel):
        v, w, mspe = select_predictor_weights(
            company_levels_panel, PredictorSpec(outcome_periods=(2015, 2015)), FAST)
        np.testing.assert_allclose(v.values, [1.0])
        assert mspe >= 0.0

    def test_exact_fit_reaches_zero_mspe(self):
        rng = np.random.default_rng(2)
        donors = rng.normal(size=(3, 7))
        combo = np.array([0.2, 0.5, 0.3])
        Y = np.vstack([donors, combo @ donors])
        panel = panel_from_matrix(Y, n_pre=5)
        v, w, mspe = select_predictor_weights(panel, PredictorSpec(standardize=False), FAST)
        assert mspe <= 1e-8
        np.testing.assert_allclose(w.values, combo, atol=1e-5)

    def test_beats_uniform_v(self):
        rng = np.random.default_rng(14)
        panel = random_panel(rng, n_donors=5, n_pre=6, n_post=2)
        spec = PredictorSpec()
        v, w, mspe = select_predictor_weights(panel, spec, FAST)
        pm = build_predictor_matrix(panel, spec)
        w_uniform = solve_weights_fixed_v(pm.treated, pm.donors, np.full(pm.k, 1.0 / pm.k))
        assert mspe <= _pre_outcome_mspe(panel, w_uniform.values) + 1e-9

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(15)
        panel = random_panel(rng, n_donors=4, n_pre=5, n_post=2)
        r1 = select_predictor_weights(panel, PredictorSpec(), FAST)
        r2 = select_predictor_weights(panel, PredictorSpec(), FAST)
        np.testing.assert_array_equal(r1[0].values, r2[0].values)
        np.testing.assert_array_equal(r1[1].values, r2[1].values)

    def test_threaded_multistarts_match_serial(self):
        rng = np.random.default_rng(16)
        panel = random_panel(rng, n_donors=4, n_pre=5, n_post=2)
        serial = select_predictor_weights(panel, PredictorSpec(),
                                          ScmOptions(seed=3, multistarts=4, threads=1,
                                                     max_evals_per_start=120))
        threaded = select_predictor_weights(panel, PredictorSpec(),
                                            ScmOptions(seed=3, multistarts=4, threads=4,
                                                       max_evals_per_start=120))
        np.testing.assert_array_equal(serial[1].values, threaded[1].values)


class TestScmFit:
    def test_zero_effect_identity(self):
        donors = np.array([
            [1.0, 2.0, 3.0, 4.0, 5.0],
            [5.5, 4.0, 3.5, 2.0, 1.5],
        ])
        Y = np.vstack([donors, donors[0]])
        fit = scm_fit(panel_from_matrix(Y, n_pre=3), PredictorSpec(standardize=False), FAST)
        assert max(abs(g) for g in fit.gaps.values()) < 1e-8
        assert fit.pre_rmspe < 1e-9

    def test_recovers_unique_convex_combo(self):
        rng = np.random.default_rng(21)
        donors = rng.normal(size=(4, 8))
        combo = np.array([0.1, 0.4, 0.3, 0.2])
        Y = np.vstack([donors, combo @ donors])
        Y[-1, 6:] += 7.0  # post-treatment shift leaves the pre fit exact
        fit = scm_fit(panel_from_matrix(Y, n_pre=6), PredictorSpec(standardize=False), FAST)
        np.testing.assert_allclose(fit.donor_weights.values, combo, atol=1e-6)
        assert abs(average_effect(fit) - 7.0) < 1e-6

    def test_gap_definition_and_series(self, company_levels_panel):
        fit = scm_fit(company_levels_panel, PredictorSpec(), FAST)
        panel = company_levels_panel
        w = fit.donor_weights.values
        for j, p in enumerate(panel.periods):
            synth = float(w @ panel.donor_outcomes[:, j])
            assert abs(fit.synthetic_series[p] - synth) < 1e-12
            assert abs(fit.gaps[p] - (panel.treated_outcomes[j] - synth)) < 1e-12
        pre = [fit.gaps[p] for p in panel.pre_periods]
        assert abs(fit.pre_rmspe - float(np.sqrt(np.mean(np.square(pre))))) < 1e-12

    def test_affine_shift_leaves_gaps_under_fixed_weights(self):
        rng = np.random.default_rng(22)
        panel = random_panel(rng, n_donors=4, n_pre=4, n_post=2)
        w = np.array([0.4, 0.3, 0.2, 0.1])
        gaps = panel.treated_outcomes - w @ panel.donor_outcomes
        shifted = panel_from_matrix(panel.outcomes + 11.5, n_pre=4)
        gaps_shifted = shifted.treated_outcomes - w @ shifted.donor_outcomes
        np.testing.assert_allclose(gaps, gaps_shifted, atol=1e-9)

    def test_mean_post_gap_recovers_injected_shift(self):
        # Simulation oracle: inject +5 after treatment, fit on 100 seeds.
        gaps = []
        for seed in range(100):
            cfg = DgpConfig(n_donors=4, n_pre=5, n_post=2, n_factors=1,
                            noise_sd=1.0, true_tau=5.0, seed=seed)
            panel, _ = generate_panel(cfg)
            fit = scm_fit(panel, PredictorSpec(standardize=False),
                          ScmOptions(seed=0, multistarts=1, max_evals_per_start=100))
            gaps.append(average_effect(fit))
        assert 4.0 <= float(np.mean(gaps)) <= 6.0


class TestAverageEffect:
    @staticmethod
    def _fit(post_gaps, pre_gaps=(0.1, -0.1)):
        from synthpanel import PredictorWeights, ScmFit, WeightVector

        first_post = 2000 + len(pre_gaps)
        gaps = {2000 + i: g for i, g in enumerate(pre_gaps)}
        gaps.update({first_post + i: g for i, g in enumerate(post_gaps)})
        return ScmFit(
            donor_units=("a", "b"),
            donor_weights=WeightVector([0.5, 0.5]),
            predictor_weights=PredictorWeights([1.0]),
            predictor_labels=("outcome:2000",),
            dropped_predictors=(),
            gaps=gaps,
            synthetic_series={t: 0.0 for t in gaps},
            pre_rmspe=0.1,
            mspe_pre=0.01,
            first_treated_period=first_post,
        )

    def test_two_period_average(self):
        fit = self._fit([13.3, -0.6])
        assert abs(average_effect(fit, [2002, 2003]) - 6.35) < 1e-12

    def test_single_period(self):
        fit = self._fit([4.2])
        assert average_effect(fit, [2002]) == 4.2

    def test_symmetric_gaps_cancel(self):
        fit = self._fit([3.7, -3.7])
        assert abs(average_effect(fit)) < 1e-12

    def test_empty_is_error(self):
        with pytest.raises(ValidationError):
            average_effect(self._fit([1.0]), [])

    def test_pre_period_rejected(self):
        fit = self._fit([1.0])
        with pytest.raises(ValidationError, match="pre-treatment"):
            average_effect(fit, [2000])
        with pytest.raises(ValidationError, match="not in fit"):
            average_effect(fit, [2030])
