"""RIS-aided link: SNR, phase optimization and outage/error metrics.

The end-to-end SNR with reflection amplitude one is

    gamma = |sum_l h_l g_l exp(i(theta_l1 + theta_l2 + phi_l))|^2 P / o^2,

maximized by co-phasing, which gives (sum_l h_l g_l)^2 P / o^2.  Under
co-phasing the SNR statistics follow from the sum-of-products laws with two
hops per element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import special

from .ftr_model import DEFAULT_CONTROL, FtrParams, SeriesControl
from .product_sum_stats import (
    MAX_CONTOUR_DIM,
    MGF_LEAD,
    ChainBank,
    DimensionCapError,
    HopChain,
    MomentKernel,
    bank_terms,
    product_moment,
    sum_product_cdf,
    sum_product_pdf,
)
from .special_functions import SharedBlock, mellin_barnes

__all__ = [
    "RisLink",
    "PhaseOptimizerConfig",
    "MeasurementOracle",
    "ExactOracle",
    "snr_instant",
    "snr_max",
    "chain_bank",
    "ris_snr_pdf",
    "ris_snr_cdf",
    "optimize_phases",
    "expectation_opt",
    "phase_fixed_point",
    "phase_recurrence",
    "phase_variance",
    "common_phase",
    "ris_outage",
    "ris_abep",
]

TWO_PI = 2.0 * math.pi


def _wrap(angle):
    """Map angles into (0, 2 pi]."""
    out = np.mod(angle, TWO_PI)
    return np.where(out == 0.0, TWO_PI, out)


@dataclass(frozen=True)
class RisLink:
    """L-element RIS link.

    ``element_channels[l]`` holds the FTR laws of the BS-to-element and
    element-to-user hops.  Phases are in radians; powers in watts.
    """

    element_channels: tuple[tuple[FtrParams, FtrParams], ...]
    theta1: tuple[float, ...]
    theta2: tuple[float, ...]
    phi: tuple[float, ...] | None = None
    P: float = 1.0
    noise: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        chans = tuple((h, g) for h, g in self.element_channels)
        object.__setattr__(self, "element_channels", chans)
        L = len(chans)
        if L < 1:
            raise ValueError("an RIS needs at least one element")
        object.__setattr__(self, "theta1", tuple(float(v) for v in self.theta1))
        object.__setattr__(self, "theta2", tuple(float(v) for v in self.theta2))
        phi = self.phi if self.phi is not None else (TWO_PI,) * L
        object.__setattr__(self, "phi", tuple(float(v) for v in phi))
        if not (len(self.theta1) == len(self.theta2) == len(self.phi) == L):
            raise ValueError("theta1, theta2 and phi need one entry per element")
        if self.beta != 1.0:
            raise ValueError("only unit reflection amplitude is supported")
        if not (self.P > 0 and self.noise > 0):
            raise ValueError("transmit and noise powers must be positive")

    @property
    def L(self) -> int:
        return len(self.element_channels)

    @property
    def theta_sum(self) -> np.ndarray:
        return np.asarray(self.theta1) + np.asarray(self.theta2)

    def with_phi(self, phi: Sequence[float]) -> "RisLink":
        return RisLink(self.element_channels, self.theta1, self.theta2, tuple(_wrap(np.asarray(phi))),
                       self.P, self.noise, self.beta)

    @classmethod
    def identical(cls, L: int, hop_h: FtrParams, hop_g: FtrParams, P: float = 1.0,
                  noise: float = 1.0, theta1=None, theta2=None) -> "RisLink":
        """Link whose elements all share the same pair of hop laws."""
        theta1 = tuple(theta1) if theta1 is not None else (TWO_PI,) * L
        theta2 = tuple(theta2) if theta2 is not None else (TWO_PI,) * L
        return cls(((hop_h, hop_g),) * L, theta1, theta2, None, P, noise)


def _amplitudes(link: RisLink, h, g):
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    if h.shape[-1] != link.L or g.shape[-1] != link.L:
        raise ValueError(f"amplitude lists must have length L={link.L}")
    return h, g


def snr_instant(link: RisLink, h, g) -> float | np.ndarray:
    """SNR for the link's current phase shifts (vectorized over leading axes)."""
    h, g = _amplitudes(link, h, g)
    phase = np.exp(1j * (link.theta_sum + np.asarray(link.phi)))
    return np.abs(np.sum(h * g * phase, axis=-1)) ** 2 * link.P / link.noise


def snr_max(link: RisLink, h, g) -> float | np.ndarray:
    """SNR under co-phasing, (sum h g)^2 P / o^2."""
    h, g = _amplitudes(link, h, g)
    return np.sum(h * g, axis=-1) ** 2 * link.P / link.noise


def chain_bank(link: RisLink) -> ChainBank:
    return ChainBank(tuple(HopChain((h, g)) for h, g in link.element_channels))


def _snr_to_amplitude(link: RisLink, z: float) -> float:
    return math.sqrt(z * link.noise / link.P)


def ris_snr_cdf(link: RisLink, z: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Distribution function of the co-phased end-to-end SNR."""
    if not z >= 0:
        raise ValueError("SNR threshold must be non-negative")
    return sum_product_cdf(chain_bank(link), _snr_to_amplitude(link, z), ctrl)


def ris_snr_pdf(link: RisLink, z: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of the co-phased end-to-end SNR."""
    if not z > 0:
        raise ValueError("density evaluated for z > 0")
    y = _snr_to_amplitude(link, z)
    return sum_product_pdf(chain_bank(link), y, ctrl) * y / (2.0 * z)


def ris_outage(link: RisLink, gamma_th: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Outage probability P(gamma < gamma_th) under co-phasing."""
    if not gamma_th > 0:
        raise ValueError("threshold must be positive")
    return ris_snr_cdf(link, gamma_th, ctrl)


def ris_abep(link: RisLink, p: float, q: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Average bit-error probability for the binary pair (p, q).

    Integrating the conditional error Gamma(p, q gamma)/(2 Gamma(p)) against
    the SNR law gives an L-variable Mellin-Barnes integral with per-element
    factor Gamma(-s) E[X^s] (q P / o^2)^{s/2} and coupling
    Gamma(p - sum s / 2) / Gamma(1 - sum s), scaled by 1/(2 Gamma(p)).
    """
    if not (p > 0 and q > 0):
        raise ValueError("modulation parameters must be positive")
    bank = chain_bank(link)
    if bank.L > MAX_CONTOUR_DIM:
        raise DimensionCapError(
            f"closed-form ABEP is capped at L <= {MAX_CONTOUR_DIM}; "
            "estimate it by Monte-Carlo (mc-validate) instead"
        )
    M = bank_terms(bank, ctrl)
    L = bank.L
    shared = SharedBlock(
        n=1,
        a=((1.0 - p, tuple([0.5] * L)), (1.0, tuple([-1.0] * L))),
    )
    x = 1.0 / math.sqrt(q * link.P / link.noise)
    kernels = [MomentKernel(c, M, MGF_LEAD) for c in bank.chains]
    res = mellin_barnes(kernels, [x] * L, shared)
    return float(np.clip(res.value / (2.0 * special.gamma(p)), 0.0, 0.5))


# ---------------------------------------------------------------------------
# phase optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseOptimizerConfig:
    """Search depth per element (M1), number of sweeps (M2) and the
    amplitude-average window of a sampled oracle."""

    M1: int = 10
    M2: int = 5
    oracle_trials: int = 10_000

    def __post_init__(self):
        if min(self.M1, self.M2, self.oracle_trials) < 1:
            raise ValueError("optimizer settings must be positive")


class MeasurementOracle(Protocol):
    """Maps a full phase vector to an estimate of E|sum h g e^{i(...)}|."""

    def __call__(self, phi: np.ndarray) -> float: ...


@dataclass
class ExactOracle:
    """Modulus of the expected phasor sum, |sum_l E_l e^{i(theta_l + phi_l)}|.

    ``means`` are the per-element amplitude means E[h_l g_l].
    """

    theta_sum: np.ndarray
    means: np.ndarray
    calls: int = field(default=0, init=False)

    def __call__(self, phi: np.ndarray) -> float:
        self.calls += 1
        return float(np.abs(np.sum(self.means * np.exp(1j * (self.theta_sum + phi)))))

    @classmethod
    def for_link(cls, link: RisLink, ctrl: SeriesControl = DEFAULT_CONTROL) -> "ExactOracle":
        _, per = expectation_opt(link, ctrl)
        return cls(link.theta_sum, np.asarray(per))


def optimize_phases(
    link: RisLink,
    cfg: PhaseOptimizerConfig,
    oracle: MeasurementOracle,
    phi0: Sequence[float] | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Binary-search-tree phase optimization.

    Each element is tuned in turn while the others stay fixed: two probe
    phases are measured, the better one becomes the centre of the next
    pair, and the probe spacing halves at every step (starting from the
    pair {0, pi}).  After ``M1`` probe pairs the element keeps the best
    phase; the sweep over all elements repeats ``M2`` times.

    Returns the final phases in (0, 2 pi] and the trace of the oracle
    value after each probe pair.
    """
    L = link.L
    phi = np.zeros(L) if phi0 is None else np.array(phi0, dtype=float)
    if phi0 is None and link.phi is not None:
        phi = np.asarray(link.phi, dtype=float).copy()
    trace: list[float] = []
    for _sweep in range(cfg.M2):
        for ell in range(L):
            first, second = 0.0, math.pi
            width = math.pi / 2.0
            best = first
            for _probe in range(cfg.M1):
                trial = phi.copy()
                trial[ell] = first
                e_first = oracle(trial)
                trial[ell] = second
                e_second = oracle(trial)
                if e_first >= e_second:
                    best, value = first, e_first
                else:
                    best, value = second, e_second
                trace.append(value)
                first = (best - width / 2.0) % TWO_PI
                second = (best + width / 2.0) % TWO_PI
                width /= 2.0
            phi[ell] = best
    return _wrap(phi), trace


def expectation_opt(link: RisLink, ctrl: SeriesControl = DEFAULT_CONTROL) -> tuple[float, list[float]]:
    """E_opt = sum_l E[h_l g_l] and the per-element means."""
    per = [product_moment(HopChain((h, g)), 1.0, ctrl) for h, g in link.element_channels]
    return float(math.fsum(per)), per


def phase_fixed_point(alpha) -> float:
    """Limit phase 2/(L^2 - L) sum_{l>=2} (l-1) alpha_l of the element-wise averaging."""
    alpha = np.asarray(alpha, dtype=float)
    L = alpha.size
    if L < 2:
        raise ValueError("the fixed point needs L >= 2")
    weights = np.arange(L, dtype=float)  # l - 1 for l = 1..L
    return float(2.0 / (L * L - L) * np.dot(weights, alpha))


def phase_recurrence(alpha, steps: int) -> np.ndarray:
    """Iterate a_{n} = mean of the previous L-1 values, starting from ``alpha``."""
    alpha = [float(v) for v in alpha]
    L = len(alpha)
    if L < 2:
        raise ValueError("the recurrence needs L >= 2")
    seq = list(alpha)
    window = math.fsum(seq[-(L - 1):])
    for _ in range(steps):
        nxt = window / (L - 1)
        window += nxt - seq[-(L - 1)]
        seq.append(nxt)
    return np.asarray(seq)


def common_phase(link: RisLink, phi) -> float:
    """Circular mean of theta_l1 + theta_l2 + phi_l, in [0, 2 pi)."""
    total = link.theta_sum + np.asarray(phi)
    return float(np.angle(np.sum(np.exp(1j * total))) % TWO_PI)


def phase_variance(link: RisLink, phi) -> float:
    """Variance of the total per-element phases around their circular mean."""
    total = link.theta_sum + np.asarray(phi)
    centre = np.angle(np.sum(np.exp(1j * total)))
    dev = np.angle(np.exp(1j * (total - centre)))
    return float(np.var(dev))
