"""Trial-based estimators used to cross-check the closed forms.

Trials are grouped into fixed-size blocks.  Block ``b`` draws from a
counter-based Philox stream keyed by ``(seed, b)``, so the samples do not
depend on how many worker threads process the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .af_relay import AfLink, af_snr_approx, af_snr_exact
from .ftr_model import DEFAULT_CONTROL, FtrParams, SeriesControl, sample_envelope_rng
from .metrics import conditional_error
from .ris_system import ExactOracle, RisLink

__all__ = [
    "McConfig",
    "McEstimate",
    "block_rng",
    "simulate_hops",
    "simulate_ris_snr",
    "simulate_af_snr",
    "empirical_outage",
    "empirical_abep",
    "empirical_mean",
    "make_measurement_oracle",
]


@dataclass(frozen=True)
class McConfig:
    """Trial count, seed, block size and worker threads."""

    trials: int = 1_000_000
    seed: int = 0
    block_size: int = 1 << 16
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1000:
            raise ValueError("at least 1000 trials are required")
        if self.block_size < 1 or self.threads < 1:
            raise ValueError("block size and thread count must be positive")

    def blocks(self) -> list[tuple[int, int]]:
        """(block index, trial count) pairs covering all trials."""
        full, rest = divmod(self.trials, self.block_size)
        out = [(b, self.block_size) for b in range(full)]
        if rest:
            out.append((full, rest))
        return out


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int
    seed: int


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent generator for one block of trials."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _run_blocks(cfg: McConfig, draw: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    jobs = cfg.blocks()

    def one(job):
        block, count = job
        return draw(block_rng(cfg.seed, block), count)

    if cfg.threads == 1 or len(jobs) == 1:
        parts = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(one, jobs))
    return np.concatenate(parts, axis=-1)


def simulate_hops(hops: list[FtrParams], cfg: McConfig) -> np.ndarray:
    """Envelopes of independent hops, shape (len(hops), trials)."""

    def draw(rng, count):
        return np.stack([sample_envelope_rng(h, count, rng) for h in hops])

    return _run_blocks(cfg, draw)


def simulate_ris_snr(link: RisLink, phase_mode: str, cfg: McConfig) -> np.ndarray:
    """End-to-end RIS SNR samples.

    ``optimal`` co-phases every realization; ``given`` uses the link's phase
    shifts.  Both modes see the same amplitude draws for a given config.
    """
    if phase_mode not in ("optimal", "given"):
        raise ValueError(f"unknown phase mode {phase_mode!r}")
    phasor = np.exp(1j * (link.theta_sum + np.asarray(link.phi)))
    if phase_mode == "optimal":
        phasor = np.ones(link.L)
    gain = link.P / link.noise

    def draw(rng, count):
        total = np.zeros(count, dtype=complex)
        for ell, (h_law, g_law) in enumerate(link.element_channels):
            h = sample_envelope_rng(h_law, count, rng)
            g = sample_envelope_rng(g_law, count, rng)
            total += h * g * phasor[ell]
        return np.abs(total) ** 2 * gain

    return _run_blocks(cfg, draw)


def simulate_af_snr(
    link: AfLink,
    power_mode: str,
    hw_mode: str,
    cfg: McConfig,
    *,
    exact: bool = False,
) -> np.ndarray:
    """End-to-end AF SNR samples.

    ``fixed`` uses the link's powers, ``optimal`` splits the budget
    (P1 + P2)/2 per realization.  ``exact`` keeps the unit term in the SNR
    denominator.
    """
    if power_mode not in ("fixed", "optimal"):
        raise ValueError(f"unknown power mode {power_mode!r}")
    if hw_mode not in ("ideal", "impaired"):
        raise ValueError(f"unknown hardware mode {hw_mode!r}")
    hw = link.hardware if hw_mode == "impaired" else link.ideal_copy().hardware
    ratio = af_snr_exact if exact else af_snr_approx

    def draw(rng, count):
        r1 = sample_envelope_rng(link.hop1, count, rng)
        r2 = sample_envelope_rng(link.hop2, count, rng)
        if power_mode == "fixed":
            P1, P2 = link.P1, link.P2
        else:
            P1 = 2.0 * link.budget * r2 / (r1 + r2)
            P2 = 2.0 * link.budget - P1
        g1 = P1 * r1 * r1 / link.noise
        g2 = P2 * r2 * r2 / link.noise
        return ratio(g1, g2, hw)

    return _run_blocks(cfg, draw)


def _estimate(values: np.ndarray, seed: int) -> McEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ValueError("empty sample set")
    mean = float(np.sum(values) / n)  # numpy sums pairwise
    var = float(np.sum((values - mean) ** 2) / max(n - 1, 1))
    return McEstimate(mean=mean, std_error=math.sqrt(var / n), trials=n, seed=seed)


def empirical_outage(samples, gamma_th: float, seed: int = 0) -> McEstimate:
    """Fraction of samples below ``gamma_th``."""
    samples = np.asarray(samples, dtype=float)
    return _estimate((samples < gamma_th).astype(float), seed)


def empirical_abep(samples, p: float, q: float, seed: int = 0) -> McEstimate:
    """Sample mean of the conditional error Gamma(p, q gamma) / (2 Gamma(p))."""
    if not (p > 0 and q > 0):
        raise ValueError("modulation parameters must be positive")
    return _estimate(conditional_error(np.asarray(samples, dtype=float), p, q), seed)


def empirical_mean(samples, seed: int = 0) -> McEstimate:
    return _estimate(samples, seed)


@dataclass
class SampledOracle:
    """Average of |sum h g e^{i(theta + phi)}| over a fixed set of amplitude draws.

    The draws are made once, so repeated calls with the same phases return
    the same value and different phases are compared on common samples.
    """

    theta_sum: np.ndarray
    products: np.ndarray  # shape (L, trials)
    calls: int = 0

    def __call__(self, phi: np.ndarray) -> float:
        self.calls += 1
        phasor = np.exp(1j * (self.theta_sum + np.asarray(phi, dtype=float)))
        return float(np.mean(np.abs(phasor @ self.products)))


def make_measurement_oracle(
    link: RisLink,
    cfg: McConfig,
    *,
    exact: bool = False,
    ctrl: SeriesControl = DEFAULT_CONTROL,
):
    """Measurement oracle for the phase optimizer.

    The sampled variant averages over ``cfg.trials`` amplitude draws; the
    exact variant uses the per-element means E[h g].
    """
    if exact:
        return ExactOracle.for_link(link, ctrl)
    hops = [law for pair in link.element_channels for law in pair]
    env = simulate_hops(hops, cfg)
    products = env[0::2] * env[1::2]
    return SampledOracle(link.theta_sum, products)
