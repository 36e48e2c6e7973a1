import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from ftrlink.ftr_model import (
    FtrParams,
    SeriesControl,
    TruncationWarning,
    cdf_squared,
    coefficient_d,
    envelope_cdf,
    envelope_pdf,
    pdf_squared,
    sample_envelope,
    series_mass,
    series_weights,
    specular_amplitudes,
)
from ftrlink.product_sum_stats import HopChain, product_moment
from helpers import ks_distance

GRID = [
    FtrParams(5, 3, 0.5, 0.5),
    FtrParams(25, 3, 0.5, 0.5),
    FtrParams(10, 7, 0.7, 0.3),
    FtrParams(1.5, 10, 0.9, 0.2),
    FtrParams(2, 1, 0.25, 1.0),
]


def d_reference(n, m, K, delta):
    """Legendre double sum in 30-digit arithmetic, with i read as the imaginary unit.

    The Legendre function is the continuation across the cut (mpmath type 2).
    """
    mp.mp.dps = 30
    R = mp.sqrt((m + K) ** 2 - (K * delta) ** 2)
    x = (m + K) / R
    total = mp.mpf(0)
    for k in range(n + 1):
        for l in range(k + 1):
            total += (
                mp.binomial(n, k) * (mp.mpf(delta) / 2) ** k * mp.binomial(k, l)
                * mp.gamma(n + m + 2 * l - k) * mp.expj(mp.pi * (2 * l - k) / 2)
                * R ** (-(n + m)) * mp.legenp(n + m - 1, k - 2 * l, x, type=2)
            )
    return total


class TestFtrParams:
    def test_upsilon(self):
        assert FtrParams(5, 3, 0.5, 0.5).upsilon == pytest.approx(4.0)

    def test_from_upsilon_round_trip(self):
        p = FtrParams.from_upsilon(10, 3, 0.5, 10.0)
        assert p.upsilon == pytest.approx(10.0)

    @pytest.mark.parametrize("bad", [dict(m=0), dict(K=-1), dict(delta=1.2), dict(sigma2=0)])
    def test_validation(self, bad):
        args = dict(m=5, K=3, delta=0.5, sigma2=0.5) | bad
        with pytest.raises(ValueError):
            FtrParams(**args)

    def test_series_control(self):
        with pytest.raises(ValueError):
            SeriesControl(max_terms=0)
        with pytest.raises(ValueError):
            SeriesControl(target_epsilon=0.0)


class TestCoefficientD:
    @pytest.mark.parametrize("n", [0, 3, 11])
    def test_delta_zero_collapse(self, n):
        p = FtrParams(5, 3, 0.0, 0.5)
        expected = math.exp(math.lgamma(n + 5) - (n + 5) * math.log(8.0))
        assert coefficient_d(n, p) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("n", [0, 1, 4, 9])
    def test_against_high_precision(self, n):
        ref = d_reference(n, 5, 3, 0.5)
        assert abs(mp.im(ref)) < 1e-20 * abs(ref)
        assert coefficient_d(n, FtrParams(5, 3, 0.5, 0.5)) == pytest.approx(float(mp.re(ref)), rel=1e-10)

    def test_large_index_against_phase_average(self):
        # d_n is also the phase average of Gamma(n+m)(1 + delta cos a)^n / (m + K + K delta cos a)^(n+m)
        p = FtrParams(5, 3, 0.5, 0.5)
        n = 60

        def f(a):
            return math.exp(math.lgamma(n + 5) + n * math.log(1 + 0.5 * math.cos(a))
                            - (n + 5) * math.log(8 + 1.5 * math.cos(a)))

        ref = integrate.quad(f, 0, 2 * math.pi, epsabs=0, epsrel=1e-13, limit=200)[0] / (2 * math.pi)
        assert coefficient_d(n, p) == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("p", GRID)
    def test_normalization(self, p):
        assert series_mass(p, 400) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("p", GRID)
    def test_mass_non_decreasing_and_bounded(self, p):
        partial = np.cumsum(series_weights(p, 200))
        assert np.all(np.diff(partial) >= 0)
        assert partial[-1] <= 1 + 1e-9

    def test_negative_index(self):
        with pytest.raises(ValueError):
            coefficient_d(-1, GRID[0])


class TestSquaredVariate:
    @pytest.mark.parametrize("g", [0.0, 0.3, 2.0, 7.5])
    def test_k_zero_pdf(self, g):
        p = FtrParams(4, 0, 0.8, 0.7)
        assert pdf_squared(p, g) == pytest.approx(math.exp(-g / 1.4) / 1.4, rel=1e-13)

    @pytest.mark.parametrize("g", [0.3, 2.0, 7.5])
    def test_k_zero_cdf(self, g):
        p = FtrParams(4, 0, 0.8, 0.7)
        assert cdf_squared(p, g) == pytest.approx(1 - math.exp(-g / 1.4), rel=1e-13)

    @pytest.mark.parametrize("p", GRID)
    def test_pdf_normalization(self, p):
        total, _ = integrate.quad(lambda g: pdf_squared(p, g), 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_mean(self):
        p = FtrParams(5, 3, 0.5, 0.5)
        mean, _ = integrate.quad(lambda g: g * pdf_squared(p, g), 0, np.inf, limit=200)
        assert mean == pytest.approx(4.0, rel=1e-6)

    def test_cdf_at_zero(self):
        assert cdf_squared(GRID[0], 0.0) == 0.0

    @pytest.mark.parametrize("p", GRID)
    def test_derivative_matches_pdf(self, p):
        for g in np.geomspace(0.05, 5 * p.upsilon, 12):
            h = 1e-5 * g
            slope = (cdf_squared(p, g + h) - cdf_squared(p, g - h)) / (2 * h)
            assert slope == pytest.approx(pdf_squared(p, g), rel=1e-4)

    @pytest.mark.parametrize("p", GRID)
    def test_cdf_monotone_pdf_non_negative(self, p):
        g = np.linspace(0, 8 * p.upsilon, 300)
        F = np.array([cdf_squared(p, x) for x in g])
        f = np.array([pdf_squared(p, x) for x in g])
        assert np.all(np.diff(F) >= -1e-15)
        assert np.all(f >= -1e-12)
        assert F[-1] <= 1 + 1e-9

    def test_truncation_warning_carries_epsilon(self):
        ctrl = SeriesControl(max_terms=3, target_epsilon=1e-12)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pdf_squared(GRID[0], 1.0, ctrl)
        hits = [w.message for w in caught if isinstance(w.message, TruncationWarning)]
        assert hits and 0 < hits[0].epsilon < 1

    def test_negative_argument(self):
        with pytest.raises(ValueError):
            cdf_squared(GRID[0], -1.0)


class TestEnvelope:
    @pytest.mark.parametrize("r", [0.2, 1.0, 2.5])
    def test_relations(self, r):
        p = GRID[2]
        assert envelope_pdf(p, r) == pytest.approx(2 * r * pdf_squared(p, r * r), rel=1e-14)
        assert envelope_cdf(p, r) == pytest.approx(cdf_squared(p, r * r), rel=1e-14)

    def test_cdf_at_zero(self):
        assert envelope_cdf(GRID[0], 0.0) == 0.0

    @pytest.mark.parametrize("r", [0.1, 0.8, 2.0])
    def test_rayleigh_reduction(self, r):
        s2 = 0.6
        p = FtrParams(3, 0, 0.5, s2)
        assert envelope_pdf(p, r) == pytest.approx(r / s2 * math.exp(-r * r / (2 * s2)), rel=1e-13)

    @pytest.mark.parametrize("p", GRID)
    def test_normalization(self, p):
        total, _ = integrate.quad(lambda r: envelope_pdf(p, r), 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestSampler:
    def test_specular_amplitudes(self):
        p = FtrParams(5, 3, 0.5, 0.5)
        v1, v2 = specular_amplitudes(p)
        assert v1 >= v2
        assert v1**2 + v2**2 == pytest.approx(2 * p.sigma2 * p.K)
        assert 2 * v1 * v2 / (v1**2 + v2**2) == pytest.approx(p.delta)

    def test_mean_power(self):
        p = FtrParams(5, 3, 0.5, 0.5)
        r2 = sample_envelope(p, 1_000_000, seed=1) ** 2
        se = r2.std(ddof=1) / math.sqrt(r2.size)
        assert abs(r2.mean() - p.upsilon) < 3 * se

    def test_rayleigh_ks(self):
        p = FtrParams(5, 0, 0.5, 0.5)
        assert specular_amplitudes(p) == (0.0, 0.0)
        r = sample_envelope(p, 100_000, seed=2)
        assert ks_distance(r, lambda v: 1 - math.exp(-v * v / (2 * p.sigma2))) < 1.63 / math.sqrt(r.size)

    def test_ftr_ks(self):
        p = FtrParams(5, 3, 0.5, 0.5)
        r = sample_envelope(p, 100_000, seed=3)
        ctrl = SeriesControl.fixed(24)
        assert ks_distance(r, lambda v: envelope_cdf(p, v, ctrl)) < 1.63 / math.sqrt(r.size)

    @pytest.mark.parametrize("p", GRID)
    def test_power_moments(self, p):
        r2 = sample_envelope(p, 400_000, seed=4) ** 2
        for order in (1, 2):
            x = r2**order
            se = x.std(ddof=1) / math.sqrt(x.size)
            exact = product_moment(HopChain((p,)), 2.0 * order)
            assert abs(x.mean() - exact) < 4 * se

    def test_reproducible(self):
        p = GRID[1]
        assert np.array_equal(sample_envelope(p, 1000, 9), sample_envelope(p, 1000, 9))

    def test_count(self):
        with pytest.raises(ValueError):
            sample_envelope(GRID[0], 0, 1)
