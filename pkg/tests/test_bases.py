import numpy as np
import pytest
from scipy.stats import binom

from countcopula.bases import (
    BernsteinBasis,
    HarmonicDesign,
    bernstein_deriv,
    bernstein_eval,
    shift_design,
)
from countcopula.errors import InputError


class TestBernsteinBasis:
    def test_rows_match_binomial_pmf(self):
        # independent route: b_{p,n}(t) is the pmf of Binomial(n, t) at p
        basis = BernsteinBasis(num_coef=6, lo=0.0, hi=10.0)
        y = np.array([0.0, 1.3, 5.0, 9.2, 10.0])
        t = y / 10.0
        expected = np.stack([binom.pmf(np.arange(6), 5, ti) for ti in t])
        np.testing.assert_allclose(basis.rows(y), expected, atol=1e-13)

    def test_partition_of_unity(self):
        basis = BernsteinBasis(num_coef=9, lo=2.0, hi=7.0)
        rows = basis.rows(np.linspace(2.0, 7.0, 40))
        np.testing.assert_allclose(rows.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(rows >= 0.0)

    def test_endpoints_exact(self):
        basis = BernsteinBasis(num_coef=4, lo=0.0, hi=3.0)
        lo_row = basis.rows(0.0)
        hi_row = basis.rows(3.0)
        np.testing.assert_array_equal(lo_row, [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_array_equal(hi_row, [0.0, 0.0, 0.0, 1.0])

    def test_points_outside_support_are_clamped(self):
        basis = BernsteinBasis(num_coef=3, lo=0.0, hi=5.0)
        np.testing.assert_array_equal(basis.rows(-2.0), basis.rows(0.0))
        np.testing.assert_array_equal(basis.rows(8.0), basis.rows(5.0))
        np.testing.assert_array_equal(basis.clamped(np.array([-1.0, 2.0, 6.0])),
                                      [True, False, True])

    def test_monotone_coefficients_give_monotone_polynomial(self):
        rng = np.random.default_rng(42)
        basis = BernsteinBasis(num_coef=7, lo=0.0, hi=20.0)
        grid = np.linspace(0.0, 20.0, 200)
        for _ in range(20):
            theta = np.cumsum(rng.uniform(0.0, 1.0, size=7))
            values = basis.rows(grid) @ theta
            assert np.all(np.diff(values) >= -1e-12)

    def test_deriv_rows_match_finite_differences(self):
        rng = np.random.default_rng(3)
        basis = BernsteinBasis(num_coef=6, lo=0.0, hi=12.0)
        theta = np.sort(rng.normal(size=6))
        y = np.array([0.5, 3.0, 7.7, 11.5])
        h = 1e-6
        fd = (basis.rows(y + h) @ theta - basis.rows(y - h) @ theta) / (2 * h)
        np.testing.assert_allclose(basis.deriv_rows(y) @ theta, fd, rtol=1e-7)

    def test_deriv_outside_support_rejected(self):
        basis = BernsteinBasis(num_coef=3, lo=0.0, hi=4.0)
        with pytest.raises(InputError):
            basis.deriv_rows(np.array([5.0]))

    @pytest.mark.parametrize("num_coef", [0, 1])
    def test_too_few_coefficients_rejected(self, num_coef):
        with pytest.raises(InputError):
            BernsteinBasis(num_coef=num_coef)

    def test_invalid_support_rejected(self):
        with pytest.raises(InputError):
            BernsteinBasis(num_coef=3, lo=2.0, hi=2.0)
        with pytest.raises(InputError):
            BernsteinBasis(num_coef=3, lo=0.0, hi=np.inf)


class TestBernsteinHelpers:
    def test_eval_floors_the_cutoff(self):
        basis = BernsteinBasis(num_coef=4, lo=0.0, hi=6.0)
        np.testing.assert_array_equal(bernstein_eval(3.9, basis), basis.rows(3.0))

    def test_eval_below_zero_is_sentinel(self):
        basis = BernsteinBasis(num_coef=4, lo=0.0, hi=6.0)
        assert bernstein_eval(-1.0, basis) is None
        assert bernstein_eval(float("-inf"), basis) is None

    def test_eval_rejects_nan(self):
        basis = BernsteinBasis(num_coef=4, lo=0.0, hi=6.0)
        with pytest.raises(InputError):
            bernstein_eval(float("nan"), basis)

    def test_deriv_requires_interior_point(self):
        basis = BernsteinBasis(num_coef=4, lo=0.0, hi=6.0)
        with pytest.raises(InputError):
            bernstein_deriv(0.0, basis)
        with pytest.raises(InputError):
            bernstein_deriv(6.0, basis)


class TestHarmonicDesign:
    def test_harmonic_columns_integrate_to_zero(self):
        """Each sinusoid integrates to zero over a full year (quadrature)."""
        design = HarmonicDesign(n_freq=3, years=(2002,))
        d = np.linspace(0.0, 365.0, 20001)
        d_eval = np.clip(d, 1.0, 365.0)
        # integrate sin/cos(k 2 pi d / 365) directly over [0, 365]
        ang = 2.0 * np.pi * d[:, None] / 365.0
        k = np.arange(1, 4)
        cols = np.empty((d.shape[0], 6))
        cols[:, 0::2] = np.sin(k * ang)
        cols[:, 1::2] = np.cos(k * ang)
        integral = np.trapezoid(cols, d, axis=0)
        norms = np.sqrt(np.trapezoid(cols**2, d, axis=0))
        assert np.all(np.abs(integral) / norms < 1e-8)
        # and the design reproduces those columns on the day grid
        np.testing.assert_allclose(design.harmonic_rows(d_eval[1000]), cols[1000], atol=1e-12)

    def test_period_closes_at_year_boundary(self):
        design = HarmonicDesign(n_freq=3, years=(2002,))
        rng = np.random.default_rng(0)
        beta = rng.normal(size=6)
        s365 = design.harmonic_rows(365.0) @ beta
        # s(365) equals s(0) = s at the wrapped angle 2 pi
        ang = 2.0 * np.pi * 365.0 / 365.0
        k = np.arange(1, 4)
        row0 = np.empty(6)
        row0[0::2] = np.sin(k * 0.0)
        row0[1::2] = np.cos(k * 0.0)
        assert abs(s365 - row0 @ beta) < 1e-12

    def test_width_and_row_layout(self):
        design = HarmonicDesign(n_freq=3, years=tuple(range(2002, 2017)))
        assert design.width == 14 + 6
        row = design.rows(np.array(2005), np.array(100))
        assert row.shape == (20,)
        # year indicator block: exactly one active column for a non-baseline year
        assert row[:14].sum() == 1.0 and row[2] == 1.0
        baseline = design.rows(np.array(2002), np.array(100))
        assert baseline[:14].sum() == 0.0

    def test_shift_design_has_leading_intercept(self):
        design = HarmonicDesign(n_freq=3, years=tuple(range(2002, 2017)))
        row = shift_design(2002, 50, design)
        assert row.shape == (1 + 14 + 6,)
        assert row[0] == 1.0
        np.testing.assert_array_equal(row[1:], design.rows(np.array(2002), np.array(50)))

    def test_unknown_year_rejected(self):
        design = HarmonicDesign(n_freq=2, years=(2002, 2003))
        with pytest.raises(InputError):
            design.rows(np.array(2010), np.array(5))

    def test_day_out_of_range_rejected(self):
        design = HarmonicDesign(n_freq=2, years=(2002,))
        with pytest.raises(InputError):
            design.harmonic_rows(np.array([0.0]))
        with pytest.raises(InputError):
            design.harmonic_rows(np.array([366.0]))

    def test_years_must_be_increasing(self):
        with pytest.raises(InputError):
            HarmonicDesign(n_freq=2, years=(2003, 2002))
        with pytest.raises(InputError):
            HarmonicDesign(n_freq=2, years=())

    def test_needs_at_least_one_frequency(self):
        with pytest.raises(InputError):
            HarmonicDesign(n_freq=0, years=(2002,))
