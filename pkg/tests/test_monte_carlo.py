import math

import numpy as np
import pytest

from ftrlink.af_relay import AfLink, HardwareProfile, af_max_snr_cdf, af_snr_approx
from ftrlink.ftr_model import FtrParams, sample_envelope_rng
from ftrlink.monte_carlo import (
    McConfig,
    McEstimate,
    SampledOracle,
    block_rng,
    empirical_abep,
    empirical_mean,
    empirical_outage,
    make_measurement_oracle,
    simulate_af_snr,
    simulate_hops,
    simulate_ris_snr,
)
from ftrlink.product_sum_stats import HopChain, product_moment
from ftrlink.ris_system import ExactOracle, RisLink, expectation_opt, ris_abep, ris_snr_cdf
from helpers import deciles, within_se

H = FtrParams(5, 3, 0.5, 0.5)
G = FtrParams(10, 7, 0.7, 0.3)


class TestConfig:
    def test_minimum_trials(self):
        with pytest.raises(ValueError):
            McConfig(trials=999)

    def test_blocks_cover_trials(self):
        cfg = McConfig(trials=10_000, block_size=3000)
        blocks = cfg.blocks()
        assert [b for b, _ in blocks] == [0, 1, 2, 3]
        assert sum(n for _, n in blocks) == 10_000

    def test_streams_differ_by_block(self):
        assert block_rng(1, 0).random() != block_rng(1, 1).random()
        assert block_rng(1, 4).random() == block_rng(1, 4).random()


class TestDeterminism:
    @pytest.mark.parametrize("threads", [2, 8])
    def test_thread_count_invariance(self, threads):
        link = RisLink.identical(3, H, G)
        base = McConfig(trials=50_000, seed=5, block_size=4096, threads=1)
        ref = simulate_ris_snr(link, "optimal", base)
        cfg = McConfig(trials=50_000, seed=5, block_size=4096, threads=threads)
        got = simulate_ris_snr(link, "optimal", cfg)
        assert np.array_equal(ref, got)
        assert empirical_outage(ref, 3.0, 5) == empirical_outage(got, 3.0, 5)

    def test_af_thread_invariance(self):
        link = AfLink(H, G, 1.2, 0.8, 0.5)
        a = simulate_af_snr(link, "optimal", "ideal", McConfig(trials=20_000, seed=3, block_size=1000, threads=1))
        b = simulate_af_snr(link, "optimal", "ideal", McConfig(trials=20_000, seed=3, block_size=1000, threads=8))
        assert np.array_equal(a, b)

    def test_seed_changes_samples(self):
        cfg1, cfg2 = McConfig(trials=2000, seed=1), McConfig(trials=2000, seed=2)
        assert not np.array_equal(simulate_hops([H], cfg1), simulate_hops([H], cfg2))


class TestRisSampler:
    def test_rayleigh_mean_snr(self):
        # single element, K = 0: E[gamma] = (P/o^2) E[h^2] E[g^2]
        hh, gg = FtrParams(3, 0, 0.5, 0.4), FtrParams(3, 0, 0.5, 1.1)
        link = RisLink.identical(1, hh, gg, P=2.0, noise=0.5)
        s = simulate_ris_snr(link, "optimal", McConfig(trials=400_000, seed=1))
        chain = HopChain((hh, gg))
        exact = 4.0 * product_moment(chain, 2.0)
        assert exact == pytest.approx(4.0 * hh.upsilon * gg.upsilon)
        assert abs(s.mean() - exact) < 4 * s.std(ddof=1) / math.sqrt(s.size)

    def test_optimal_dominates_given(self):
        rng = np.random.default_rng(4)
        link = RisLink.identical(5, H, G, theta1=rng.uniform(0, 6, 5), theta2=rng.uniform(0, 6, 5))
        link = link.with_phi(rng.uniform(0, 6, 5))
        cfg = McConfig(trials=20_000, seed=2)
        best = simulate_ris_snr(link, "optimal", cfg)
        given = simulate_ris_snr(link, "given", cfg)
        assert np.all(best >= given * (1 - 1e-12))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            simulate_ris_snr(RisLink.identical(1, H, G), "random", McConfig(trials=1000))

    @pytest.mark.slow
    def test_ecdf_against_closed_form(self):
        link = RisLink.identical(2, H, G, P=2.0)
        s = simulate_ris_snr(link, "optimal", McConfig(trials=1_000_000, seed=17))
        for z in deciles(s):
            assert within_se(ris_snr_cdf(link, z), empirical_outage(s, z))


class TestAfSampler:
    def test_identical_hops_half_snr(self):
        hop = FtrParams(5, 3, 0.5, 0.5)
        link = AfLink(hop, hop, 1.0, 1.0, 1.0)
        cfg = McConfig(trials=5000, seed=8, block_size=5000)
        s = simulate_af_snr(link, "fixed", "ideal", cfg)
        # replay the block stream: hop 1 then hop 2
        rng = block_rng(8, 0)
        g1 = sample_envelope_rng(hop, 5000, rng) ** 2
        g2 = sample_envelope_rng(hop, 5000, rng) ** 2
        assert np.allclose(s, g1 * g2 / (g1 + g2), rtol=1e-14)
        # forcing equal hop draws halves the hop SNR exactly
        assert np.allclose(af_snr_approx(g1, g1), g1 / 2, rtol=1e-15)

    def test_impaired_ceiling(self):
        hw = HardwareProfile(0.2, 0.3)
        link = AfLink(H, G, 50.0, 80.0, 0.01, hw)
        s = simulate_af_snr(link, "fixed", "impaired", McConfig(trials=50_000, seed=6))
        assert np.all(s <= 1 / hw.d_h)

    def test_exact_below_approx(self):
        link = AfLink(H, G, 1.0, 2.0, 0.5)
        cfg = McConfig(trials=10_000, seed=7)
        assert np.all(simulate_af_snr(link, "fixed", "ideal", cfg, exact=True)
                      <= simulate_af_snr(link, "fixed", "ideal", cfg))

    def test_modes(self):
        link = AfLink(H, G)
        with pytest.raises(ValueError):
            simulate_af_snr(link, "best", "ideal", McConfig(trials=1000))
        with pytest.raises(ValueError):
            simulate_af_snr(link, "fixed", "broken", McConfig(trials=1000))

    @pytest.mark.slow
    def test_max_snr_ecdf_against_closed_form(self):
        link = AfLink(H, G, 1.3, 0.7, 0.5)
        s = simulate_af_snr(link, "optimal", "ideal", McConfig(trials=1_000_000, seed=18))
        for g in deciles(s):
            assert within_se(af_max_snr_cdf(link, g), empirical_outage(s, g))


class TestEstimators:
    def test_all_above_threshold(self):
        est = empirical_outage(np.full(1000, 5.0), 1.0)
        assert est.mean == 0.0 and est.std_error == 0.0

    def test_zero_snr_abep(self):
        assert empirical_abep(np.zeros(1000), 0.5, 1.0).mean == pytest.approx(0.5)

    def test_standard_error(self):
        x = np.random.default_rng(0).normal(size=4000)
        est = empirical_mean(x, seed=3)
        assert isinstance(est, McEstimate)
        assert est.std_error == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-12)
        assert (est.trials, est.seed) == (4000, 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_mean(np.array([]))

    def test_quadrupling_halves_error(self):
        link = RisLink.identical(2, H, G)
        for seed in range(3):
            small = empirical_abep(simulate_ris_snr(link, "optimal", McConfig(trials=50_000, seed=seed)), 0.5, 1.0)
            big = empirical_abep(simulate_ris_snr(link, "optimal", McConfig(trials=200_000, seed=seed)), 0.5, 1.0)
            assert big.std_error / small.std_error == pytest.approx(0.5, rel=0.2)

    def test_abep_against_closed_form(self):
        link = RisLink.identical(2, H, G, P=0.3)
        s = simulate_ris_snr(link, "optimal", McConfig(trials=1_000_000, seed=19))
        assert within_se(ris_abep(link, 0.5, 1.0), empirical_abep(s, 0.5, 1.0))


class TestMeasurementOracle:
    def test_co_phased_matches_expectation(self):
        link = RisLink.identical(3, H, G, theta1=(0.3, 1.2, 2.0), theta2=(0.5, 0.1, 4.0))
        cfg = McConfig(trials=200_000, seed=9)
        oracle = make_measurement_oracle(link, cfg)
        assert isinstance(oracle, SampledOracle)
        phi = 1.0 - link.theta_sum
        value = oracle(phi)
        amp = np.abs(np.exp(1j * (link.theta_sum + phi)) @ oracle.products)
        se = amp.std(ddof=1) / math.sqrt(amp.size)
        assert abs(value - expectation_opt(link)[0]) < 3 * se

    def test_reproducible_per_seed_and_phase(self):
        link = RisLink.identical(2, H, G)
        cfg = McConfig(trials=5000, seed=4)
        a, b = make_measurement_oracle(link, cfg), make_measurement_oracle(link, cfg)
        phi = np.array([0.4, 2.2])
        assert a(phi) == b(phi) == a(phi)

    def test_exact_variant(self):
        link = RisLink.identical(3, H, G, theta1=(0.3, 1.2, 2.0), theta2=(0.5, 0.1, 4.0))
        oracle = make_measurement_oracle(link, McConfig(trials=1000), exact=True)
        assert isinstance(oracle, ExactOracle)
        assert oracle(2.0 - link.theta_sum) == pytest.approx(expectation_opt(link)[0], rel=1e-12)

    def test_anti_phased_pair(self):
        link = RisLink.identical(2, H, H)
        cfg = McConfig(trials=200_000, seed=10)
        oracle = make_measurement_oracle(link, cfg)
        value = oracle(np.array([0.0, math.pi]))
        folded = np.abs(oracle.products[0] - oracle.products[1])
        assert value == pytest.approx(folded.mean(), rel=1e-12)
        assert value < 0.5 * expectation_opt(link)[0]
