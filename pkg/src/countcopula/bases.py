"""Basis and design matrices: Bernstein bases on the count grid and harmonic
seasonal/yearly shift designs.

All objects here are immutable after construction and every evaluation is a
pure function, so they can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .errors import InputError

# Sentinel for cut-offs below zero: downstream CDF evaluation maps this to
# probability 0 (the lower integration limit of the y = 0 cell).
NEG_INF = float("-inf")

DAYS_PER_YEAR = 365


@dataclass(frozen=True)
class BernsteinBasis:
    """Bernstein polynomial basis of ``num_coef`` functions on ``[lo, hi]``.

    A monotone non-decreasing coefficient vector yields a monotone
    non-decreasing polynomial, which is how count transformations are kept
    monotone during estimation.
    """

    num_coef: int
    lo: float = 0.0
    hi: float = 1.0
    _binom: np.ndarray = field(init=False, repr=False, compare=False)
    _binom_deriv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_coef < 2:
            raise InputError(f"need at least 2 basis functions, got {self.num_coef}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise InputError(f"invalid support [{self.lo}, {self.hi}]")
        n = self.num_coef - 1
        object.__setattr__(self, "_binom", comb(n, np.arange(n + 1)))
        object.__setattr__(self, "_binom_deriv", comb(n - 1, np.arange(n)))

    @property
    def degree(self):
        return self.num_coef - 1

    def _unit(self, y):
        return (np.asarray(y, dtype=float) - self.lo) / (self.hi - self.lo)

    def rows(self, y):
        """Basis rows at (clamped) points ``y``; shape ``(..., num_coef)``.

        Rows are nonnegative and sum to one.  Points outside the support are
        clamped to the nearest boundary.
        """
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InputError("non-finite evaluation point for Bernstein basis")
        t = np.clip(self._unit(y), 0.0, 1.0)[..., None]
        n = self.degree
        p = np.arange(n + 1)
        # 0**0 = 1 handles the endpoints exactly
        return self._binom * t**p * (1.0 - t) ** (n - p)

    def clamped(self, y):
        """Boolean mask of points that fall outside the support."""
        y = np.asarray(y, dtype=float)
        return (y < self.lo) | (y > self.hi)

    def deriv_rows(self, y):
        """Rows of the derivative basis: ``deriv_rows(y) @ theta`` is the
        derivative of the Bernstein polynomial with coefficients ``theta``.

        Defined on the closed support (one-sided at the boundaries).
        """
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InputError("non-finite evaluation point for Bernstein basis")
        if np.any(self.clamped(y)):
            raise InputError("derivative requested outside the basis support")
        t = self._unit(y)[..., None]
        n = self.degree
        p = np.arange(n)
        lower = self._binom_deriv * t**p * (1.0 - t) ** (n - 1 - p)
        scale = n / (self.hi - self.lo)
        out = np.zeros(y.shape + (n + 1,))
        # d/dy sum_p theta_p b_{p,n} = scale * sum_p (theta_{p+1}-theta_p) b_{p,n-1}
        out[..., :-1] -= scale * lower
        out[..., 1:] += scale * lower
        return out


def bernstein_eval(y, basis: BernsteinBasis):
    """Basis row at the floored cut-off ``a(floor(y))``.

    Returns ``None`` for ``y < 0`` (the minus-infinity sentinel: the cell
    boundary below a zero count carries probability 0).
    """
    if not np.isfinite(y):
        if y == NEG_INF:
            return None
        raise InputError(f"non-finite cut-off {y!r}")
    if y < 0:
        return None
    return basis.rows(np.floor(y))


def bernstein_deriv(y, basis: BernsteinBasis):
    """Derivative basis row at a point strictly inside the support."""
    if not np.isfinite(y) or not (basis.lo < y < basis.hi):
        raise InputError(f"derivative point {y!r} not inside ({basis.lo}, {basis.hi})")
    return basis.deriv_rows(y)


@dataclass(frozen=True)
class HarmonicDesign:
    """Seasonal/yearly design: year indicators (first year is the baseline)
    and ``2 * n_freq`` sinusoids over the 365-day grid.

    The harmonic columns integrate to zero over a full year and the smooth
    seasonal component satisfies s(0) = s(365) by construction.  Leap days are
    dropped at ingestion, so every year has 365 days here.

    :meth:`rows` carries no intercept column: inside the joint model the
    overall level is absorbed by the monotone transformation, and a shift
    intercept would be exactly collinear with it.  :func:`shift_design`
    prepends the conventional leading one for standalone use.
    """

    n_freq: int
    years: tuple[int, ...]

    def __post_init__(self):
        if self.n_freq < 1:
            raise InputError("need at least one sinusoid frequency")
        if len(self.years) < 1 or list(self.years) != sorted(set(self.years)):
            raise InputError("years must be a non-empty strictly increasing sequence")
        object.__setattr__(self, "years", tuple(self.years))

    @property
    def width(self):
        return (len(self.years) - 1) + 2 * self.n_freq

    @property
    def harmonic_width(self):
        return 2 * self.n_freq

    def harmonic_rows(self, day):
        """Sin/cos block for days in 1..365; shape ``(..., 2 * n_freq)``.

        Column order: sin(k w d), cos(k w d) for k = 1..n_freq.
        """
        day = np.asarray(day, dtype=float)
        if np.any((day < 1) | (day > DAYS_PER_YEAR)):
            raise InputError("day of year must lie in 1..365")
        ang = 2.0 * np.pi * day[..., None] / DAYS_PER_YEAR
        k = np.arange(1, self.n_freq + 1)
        out = np.empty(day.shape + (2 * self.n_freq,))
        out[..., 0::2] = np.sin(k * ang)
        out[..., 1::2] = np.cos(k * ang)
        return out

    def rows(self, year, day):
        """Shift-design rows ``(year indicators, harmonics)``, no intercept."""
        year = np.asarray(year)
        day = np.asarray(day)
        known = np.isin(year, self.years)
        if not np.all(known):
            bad = np.unique(np.asarray(year)[~known])
            raise InputError(f"year(s) {bad.tolist()} not covered by the design {self.years}")
        shape = np.broadcast_shapes(year.shape, day.shape)
        out = np.zeros(shape + (self.width,))
        for i, yr in enumerate(self.years[1:]):
            out[..., i] = (year == yr)
        out[..., len(self.years) - 1:] = self.harmonic_rows(np.broadcast_to(day, shape))
        return out


def shift_design(year, day, spec: HarmonicDesign):
    """Standalone design row ``(1, year indicators, harmonics)`` of length
    ``1 + (#years - 1) + 2 * n_freq`` for one (year, day) pair."""
    body = spec.rows(np.asarray(year), np.asarray(day))
    return np.concatenate([np.ones(body.shape[:-1] + (1,)), body], axis=-1)
