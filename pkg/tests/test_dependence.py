import numpy as np
import pytest
from scipy.stats import spearmanr

import countcopula as cc
from countcopula.dependence import _batch_pair_corr
from countcopula.errors import CountCopulaError, InputError
from countcopula.model import pair_order


@pytest.fixture(scope="module")
def fitted():
    table, truth = cc.synth_birds(seed=6, n_years=2)
    spec = cc.ModelSpec(num_coef=5, n_freq=2)
    fit = cc.fit(table, spec, cc.DISCRETE)
    spec_x = cc.ModelSpec(num_coef=5, n_freq=2, lambda_mode=cc.COVARIATE)
    fit_x = cc.fit(table, spec_x, cc.DISCRETE, init=fit)
    return fit, fit_x, table, truth


class TestSigmaFromLambda:
    def test_two_by_two_closed_form(self):
        """Sigma for a single dependence entry x: [[1, -x], [-x, 1 + x^2]]."""
        rng = np.random.default_rng(0)
        for x in rng.uniform(-2, 2, size=10):
            lam = np.array([[1.0, 0.0], [x, 1.0]])
            sigma = cc.sigma_from_lambda(lam)
            expected = np.array([[1.0, -x], [-x, 1.0 + x * x]])
            np.testing.assert_allclose(sigma, expected, atol=1e-12)

    def test_unit_determinant(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            lam = np.eye(4)
            lam[np.tril_indices(4, k=-1)] = rng.normal(size=6)
            sigma = cc.sigma_from_lambda(lam)
            assert abs(np.linalg.det(sigma) - 1.0) < 1e-10

    def test_identity_for_identity(self):
        np.testing.assert_array_equal(cc.sigma_from_lambda(np.eye(3)), np.eye(3))

    def test_non_unit_diagonal_rejected(self):
        with pytest.raises(InputError):
            cc.sigma_from_lambda(np.array([[2.0, 0.0], [0.5, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(InputError):
            cc.sigma_from_lambda(np.ones((2, 3)))


class TestCorrAndSpearman:
    def test_corr_normalizes_diagonal(self):
        sigma = np.array([[4.0, 1.0], [1.0, 2.25]])
        corr = cc.corr_from_sigma(sigma)
        np.testing.assert_allclose(np.diag(corr), 1.0)
        assert abs(corr[0, 1] - 1.0 / 3.0) < 1e-12

    def test_non_pd_rejected(self):
        with pytest.raises(InputError):
            cc.corr_from_sigma(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_spearman_formula_fixed_points(self):
        assert cc.spearman_from_corr(0.0) == 0.0
        assert abs(cc.spearman_from_corr(1.0) - 1.0) < 1e-12
        assert abs(cc.spearman_from_corr(-1.0) + 1.0) < 1e-12

    def test_spearman_against_monte_carlo(self):
        """Empirical rank correlation of transformed Gaussian pairs."""
        rng = np.random.default_rng(2)
        for rho in (-0.6, 0.3, 0.75):
            cov = np.array([[1.0, rho], [rho, 1.0]])
            z = rng.multivariate_normal(np.zeros(2), cov, size=60_000)
            emp = spearmanr(np.exp(z[:, 0]), z[:, 1] ** 3 + z[:, 1]).statistic
            assert abs(emp - cc.spearman_from_corr(rho)) < 0.02

    def test_out_of_range_rejected(self):
        with pytest.raises(InputError):
            cc.spearman_from_corr(1.5)


class TestBatchPairCorr:
    def test_matches_direct_route(self):
        rng = np.random.default_rng(3)
        lam_vals = rng.normal(scale=0.5, size=(40, 3))
        batch = _batch_pair_corr(lam_vals, 3)
        for i in range(40):
            L = np.eye(3)
            for p, (r, c) in enumerate(pair_order(3)):
                L[r, c] = lam_vals[i, p]
            corr = cc.corr_from_sigma(cc.sigma_from_lambda(L))
            for p, (r, c) in enumerate(pair_order(3)):
                assert abs(batch[i, p] - corr[r, c]) < 1e-12


class TestSummarize:
    def test_point_estimates_consistent(self, fitted):
        fit, _, _, _ = fitted
        s = cc.summarize(fit, n_draws=500, seed=0)
        lam = fit.model.build_lambda()
        corr = cc.corr_from_sigma(cc.sigma_from_lambda(lam))
        np.testing.assert_allclose(s.corr, corr, atol=1e-12)
        np.testing.assert_allclose(
            s.spearman[1, 0], cc.spearman_from_corr(corr[1, 0]), atol=1e-12
        )

    def test_cis_bracket_point_estimates(self, fitted):
        fit, _, _, _ = fitted
        s = cc.summarize(fit, n_draws=2000, seed=1)
        for p, (r, c) in enumerate(s.pairs):
            assert s.spearman_ci[p, 0] < s.spearman[r, c] < s.spearman_ci[p, 1]
            assert s.corr_ci[p, 0] < s.corr[r, c] < s.corr_ci[p, 1]

    def test_wider_level_wider_interval(self, fitted):
        fit, _, _, _ = fitted
        narrow = cc.summarize(fit, level=0.5, n_draws=2000, seed=2)
        wide = cc.summarize(fit, level=0.99, n_draws=2000, seed=2)
        assert np.all(
            wide.spearman_ci[:, 1] - wide.spearman_ci[:, 0]
            > narrow.spearman_ci[:, 1] - narrow.spearman_ci[:, 0]
        )

    def test_covariate_mode_requires_day(self, fitted):
        _, fit_x, _, _ = fitted
        with pytest.raises(InputError):
            cc.summarize(fit_x, n_draws=10)
        s = cc.summarize(fit_x, day=15.0, n_draws=200, seed=3)
        assert s.evaluated_at == 15.0


class TestTrajectory:
    def test_constant_fit_is_flat(self, fitted):
        fit, _, _, _ = fitted
        days, point, lo, hi = cc.trajectory(fit, 0, days=np.array([1.0, 100.0, 300.0]),
                                            n_draws=300, seed=0)
        assert np.ptp(point) < 1e-12
        assert np.all(lo <= point) and np.all(point <= hi)

    def test_matches_summary_at_single_day(self, fitted):
        _, fit_x, _, _ = fitted
        s = cc.summarize(fit_x, day=40.0, n_draws=100, seed=4)
        days, point, _, _ = cc.trajectory(fit_x, 2, days=np.array([40.0]), n_draws=100, seed=4)
        assert abs(point[0] - s.spearman[2, 1]) < 1e-10

    def test_wraps_smoothly_at_year_boundary(self, fitted):
        _, fit_x, _, _ = fitted
        days, point, _, _ = cc.trajectory(fit_x, 0, days=np.array([1.0, 365.0]),
                                          n_draws=100, seed=5)
        # harmonic dependence: day 365 sits next to day 1 on the circle
        assert abs(point[0] - point[1]) < 0.05

    def test_bad_pair_index(self, fitted):
        fit, _, _, _ = fitted
        with pytest.raises(InputError):
            cc.trajectory(fit, 3, n_draws=10)


class TestPermutationSensitivity:
    def test_reports_all_orderings(self, fitted):
        _, _, table, _ = fitted
        spec = cc.ModelSpec(num_coef=4, n_freq=1)
        rep = cc.permutation_sensitivity(table, spec, cc.DISCRETE)
        assert len(rep.orderings) == 6
        assert all(f is None for f in rep.failures)
        assert rep.max_discrepancy >= 0.0
        assert rep.best_ordering in rep.orderings

    def test_spearman_mapped_back_to_original_order(self, fitted):
        _, _, table, _ = fitted
        spec = cc.ModelSpec(num_coef=4, n_freq=1)
        rep = cc.permutation_sensitivity(table, spec, cc.DISCRETE)
        # every per-ordering matrix reports pairs in the original species order,
        # so the (1, 0) entries all estimate the same quantity
        vals = [s[1, 0] for s in rep.spearman if s is not None]
        assert np.ptp(vals) <= rep.max_discrepancy + 1e-12

    def test_species_cap(self, fitted):
        _, _, table, _ = fitted
        spec = cc.ModelSpec(num_coef=4, n_freq=1)
        with pytest.raises(InputError):
            cc.permutation_sensitivity(table, spec, cc.DISCRETE, max_species=2)
