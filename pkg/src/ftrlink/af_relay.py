"""Dual-hop amplify-and-forward relay over FTR hops.

With hop gains Q_i = |q_i|^2, transmit powers P_i and noise o^2 the
(approximate) end-to-end SNR is

    gamma = (P1 P2 / o^2) Z,   Z = Q1 Q2 / (d Q1 Q2 + c1 Q1 + c2 Q2),

where c_i = P_i c_hi and d = P1 P2 d_h / o^2 carry the hardware impairment
levels.  Z is bounded by 1/d, so the SNR saturates at 1/d_h.

The closed forms expand each hop in its gamma mixture and write the
remaining one-dimensional integral as a two-variable Mellin-Barnes
integral.  Shifting each contour variable by its series index removes the
index from the coupling factor, so every series folds into a
single-variable kernel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .ftr_model import DEFAULT_CONTROL, FtrParams, SeriesControl, cdf_squared, effective_terms, log_series_weights, pdf_squared
from .metrics import abep_from_cdf
from .special_functions import ContourError, ConvergenceError, GammaBlock, TruncationError, SharedBlock, mellin_barnes

__all__ = [
    "HardwareProfile",
    "AfLink",
    "PowerSplit",
    "af_snr_exact",
    "af_snr_approx",
    "af_cdf_generic",
    "z_cdf",
    "z_pdf",
    "z_cdf_quad",
    "af_snr_cdf",
    "af_snr_pdf",
    "af_ideal_cdf",
    "af_ideal_pdf",
    "optimal_power_split",
    "af_max_snr_cdf",
    "af_max_snr_pdf",
    "af_max_snr_cdf_quad",
    "af_outage",
    "af_abep",
    "ClampWarning",
    "ContourFallbackWarning",
]


class ClampWarning(RuntimeWarning):
    """A closed-form probability left [0, 1] by more than the tolerance."""


_CLAMP_TOL = 1e-6


def _clamp(value: float, what: str) -> float:
    if value < -_CLAMP_TOL or value > 1.0 + _CLAMP_TOL:
        warnings.warn(ClampWarning(f"{what} = {value:.3e} clamped to [0, 1]"), stacklevel=3)
    return float(min(max(value, 0.0), 1.0))


@dataclass(frozen=True)
class HardwareProfile:
    """Transceiver impairment levels of the two hops."""

    kappa1: float = 0.0
    kappa2: float = 0.0

    def __post_init__(self):
        if not (self.kappa1 >= 0 and self.kappa2 >= 0):
            raise ValueError("impairment levels must be non-negative")

    @property
    def c_h1(self) -> float:
        return 1.0 + self.kappa1 ** 2

    @property
    def c_h2(self) -> float:
        return 1.0 + self.kappa2 ** 2

    @property
    def d_h(self) -> float:
        k1, k2 = self.kappa1 ** 2, self.kappa2 ** 2
        return k1 * k2 + k1 + k2

    @property
    def ideal(self) -> bool:
        return self.kappa1 == 0.0 and self.kappa2 == 0.0


IDEAL = HardwareProfile()


@dataclass(frozen=True)
class AfLink:
    """Two FTR hops with per-hop transmit powers (watts) and noise o^2."""

    hop1: FtrParams
    hop2: FtrParams
    P1: float = 1.0
    P2: float = 1.0
    noise: float = 1.0
    hardware: HardwareProfile = IDEAL

    def __post_init__(self):
        if not (self.P1 > 0 and self.P2 > 0 and self.noise > 0):
            raise ValueError("powers must be positive")

    @property
    def c1(self) -> float:
        return self.P1 * self.hardware.c_h1

    @property
    def c2(self) -> float:
        return self.P2 * self.hardware.c_h2

    @property
    def d(self) -> float:
        return self.P1 * self.P2 * self.hardware.d_h / self.noise

    @property
    def snr_scale(self) -> float:
        """gamma / Z."""
        return self.P1 * self.P2 / self.noise

    @property
    def budget(self) -> float:
        """Per-hop average power P with P1 + P2 = 2P."""
        return 0.5 * (self.P1 + self.P2)

    def ideal_copy(self) -> "AfLink":
        return AfLink(self.hop1, self.hop2, self.P1, self.P2, self.noise, IDEAL)


@dataclass(frozen=True)
class PowerSplit:
    P1: float
    P2: float


# ---------------------------------------------------------------------------
# instantaneous SNR
# ---------------------------------------------------------------------------

def _snr_ratio(g1, g2, hw: HardwareProfile, one: float):
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if np.any(g1 < 0) or np.any(g2 < 0):
        raise ValueError("hop SNRs must be non-negative")
    num = g1 * g2
    den = hw.d_h * num + hw.c_h1 * g1 + hw.c_h2 * g2 + one
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)


def af_snr_exact(gamma1, gamma2, hw: HardwareProfile = IDEAL):
    """g1 g2 / (d_h g1 g2 + c_h1 g1 + c_h2 g2 + 1)."""
    return _snr_ratio(gamma1, gamma2, hw, 1.0)


def af_snr_approx(gamma1, gamma2, hw: HardwareProfile = IDEAL):
    """High-SNR form without the unit term; half-harmonic mean for ideal hardware."""
    return _snr_ratio(gamma1, gamma2, hw, 0.0)


def optimal_power_split(q1_mag: float, q2_mag: float, P: float) -> PowerSplit:
    """Split 2P between the hops to maximize the ideal-hardware SNR."""
    if not (q1_mag > 0 and q2_mag > 0 and P > 0):
        raise ValueError("channel magnitudes and power must be positive")
    total = q1_mag + q2_mag
    P1 = 2.0 * P * q2_mag / total
    return PowerSplit(P1=P1, P2=2.0 * P - P1)


# ---------------------------------------------------------------------------
# generic distribution (quadrature route)
# ---------------------------------------------------------------------------

def _quad_decades(fn: Callable[[float], float], upper: float, rtol: float) -> tuple[float, float]:
    """int_0^upper fn, split at upper * 10^-k so narrow peaks near 0 are resolved."""
    edges = [0.0] + [upper * 10.0 ** -k for k in range(12, 0, -1)] + [upper]
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(fn, a, b, epsabs=0.0, epsrel=rtol, limit=200)
        total += val
        err += e
    return total, err


def af_cdf_generic(
    F1: Callable[[float], float],
    f2: Callable[[float], float],
    c1: float,
    c2: float,
    d: float,
    gamma: float,
    *,
    rtol: float = 1e-10,
) -> float:
    """P(X1 X2 / (d X1 X2 + c1 X1 + c2 X2) < gamma) for independent X1, X2.

    ``F1`` is the distribution function of X1 and ``f2`` the density of X2.
    With w = (1 - gamma d)/gamma the probability is

        F2(c1/w) + int_0^1 F1(c2 / (w (1 - t))) f2(c1 / (w t)) c1 / (w t^2) dt,

    where F2(c1/w) is itself int_0^{c1/w} f2.  The unit interval is split
    at 1/2 and mapped by t = u^2 and 1 - t = v^2.
    """
    if not (c1 > 0 and c2 > 0 and d >= 0):
        raise ValueError("need c1, c2 > 0 and d >= 0")
    if gamma <= 0:
        return 0.0
    if d > 0 and gamma * d >= 1.0:
        return 1.0
    w = (1.0 - gamma * d) / gamma

    def inner(t):
        if t <= 0.0 or t >= 1.0:
            return 0.0
        return F1(c2 / (w * (1.0 - t))) * f2(c1 / (w * t)) * c1 / (w * t * t)

    def left(u):
        return inner(u * u) * 2.0 * u

    def right(v):
        return inner(1.0 - v * v) * 2.0 * v

    edge = math.sqrt(0.5)
    total, err = 0.0, 0.0
    for fn in (left, right):
        val, e = _quad_decades(fn, edge, rtol)
        total += val
        err += e
    # F2(c1/w) as an integral of the density, so only f2 is needed
    head, e = _quad_decades(f2, c1 / w, rtol)
    total += head
    err += e
    if err > 1e-6 * max(abs(total), 1e-300) and err > 1e-14:
        raise ConvergenceError(f"generic CDF quadrature error {err:.2e}", partial_sum=total)
    return float(min(max(total, 0.0), 1.0))


# ---------------------------------------------------------------------------
# folded series kernels
# ---------------------------------------------------------------------------

class SeriesKernel:
    """log of sum_j w_j / j! Gamma(offset + j + s) times an extra gamma block.

    The strip is that of ``lead`` intersected with Re s > -offset.
    """

    def __init__(self, hop: FtrParams, M: int, offset: float, lead: GammaBlock):
        j = np.arange(int(M) + 1, dtype=float)
        logw = np.asarray(log_series_weights(hop, int(M))) - special.gammaln(j + 1.0)
        keep = np.isfinite(logw)
        self.j = j[keep]
        self.logw = logw[keep]
        self.offset = float(offset)
        self.lead = lead

    def log_eval(self, s):
        s = np.asarray(s, dtype=complex)
        terms = self.logw[:, None] + special.loggamma(self.offset + self.j[:, None] + s[None, :])
        top = np.max(terms.real, axis=0)
        return top + np.log(np.sum(np.exp(terms - top), axis=0)) + self.lead.log_eval(s)

    def strip(self):
        lo, hi = self.lead.strip()
        return max(lo, -self.offset), hi


# Gamma(-s) Gamma(1+s) / Gamma(1-s): lower incomplete gamma and beta kernel
_CDF_FIRST = GammaBlock(m=1, n=1, a=((1.0, 1.0),), b=((1.0, 1.0), (0.0, 1.0)))
# Gamma(-s) Gamma(1+2s) / Gamma(1-s): envelope version
_CDF_FIRST_ENV = GammaBlock(m=1, n=1, a=((1.0, 1.0),), b=((1.0, 2.0), (0.0, 1.0)))
# Gamma(s - 1)
_SHIFT_ONE = GammaBlock(m=1, n=0, b=((-1.0, 1.0),))
# Gamma(2s - 2)
_SHIFT_TWO = GammaBlock(m=1, n=0, b=((-2.0, 2.0),))


def _terms(link_hops, ctrl: SeriesControl) -> int:
    return effective_terms(list(link_hops), ctrl)


def _check_z(link: AfLink, z: float) -> None:
    if not z >= 0:
        raise ValueError("argument must be non-negative")


def _mb(kernels, x, shared, factor: float = 1.0) -> float:
    """factor * integral, combined in log space."""
    return mellin_barnes(kernels, x, shared, log_factor=math.log(factor)).value


class ContourFallbackWarning(RuntimeWarning):
    """A closed form lost its dynamic range and the quadrature route was used."""


def _closed_or_quad(closed: Callable[[], float], quad: Callable[[], float], fallback: bool, what: str) -> float:
    try:
        return closed()
    except (ContourError, TruncationError) as exc:
        if not fallback:
            raise
        warnings.warn(ContourFallbackWarning(f"{what}: {exc}; using quadrature"), stacklevel=3)
        return quad()


def z_cdf_quad(link: AfLink, z: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Distribution function of Z by one-dimensional quadrature."""
    _check_z(link, z)
    return af_cdf_generic(
        lambda x: cdf_squared(link.hop1, x, ctrl),
        lambda x: pdf_squared(link.hop2, x, ctrl),
        link.c1, link.c2, link.d, z,
    )


def z_cdf(link: AfLink, z: float, ctrl: SeriesControl = DEFAULT_CONTROL, *, fallback: bool = True) -> float:
    """Distribution function of Z by the two-variable closed form.

    Far in the upper tail the contour integral cancels beyond double range;
    with ``fallback`` the quadrature route is used there (with a warning).
    """
    return _closed_or_quad(lambda: _z_cdf_closed(link, z, ctrl), lambda: z_cdf_quad(link, z, ctrl),
                           fallback, "Z distribution")


def _z_cdf_closed(link: AfLink, z: float, ctrl: SeriesControl) -> float:
    _check_z(link, z)
    if z == 0.0:
        return 0.0
    if link.d > 0 and z * link.d >= 1.0:
        return 1.0
    s1, s2 = link.hop1.sigma2, link.hop2.sigma2
    w = (1.0 - z * link.d) / z
    A1 = link.c2 / (2.0 * s1 * w)
    A2 = link.c1 / (2.0 * s2 * w)
    M = _terms((link.hop1, link.hop2), ctrl)
    k1 = SeriesKernel(link.hop1, M, 1.0, _CDF_FIRST)
    k2 = SeriesKernel(link.hop2, M, 0.0, _SHIFT_ONE)
    shared = SharedBlock(n=0, a=((0.0, (1.0, 1.0)),))
    head = cdf_squared(link.hop2, link.c1 / w, ctrl)
    return _clamp(head + _mb([k1, k2], [A1, A2], shared, A2), "Z distribution")


def z_pdf(link: AfLink, z: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of Z by the two-variable closed form."""
    _check_z(link, z)
    if z == 0.0 or (link.d > 0 and z * link.d >= 1.0):
        return 0.0
    s1, s2 = link.hop1.sigma2, link.hop2.sigma2
    w = (1.0 - z * link.d) / z
    A1 = link.c2 / (2.0 * s1 * w)
    A2 = link.c1 / (2.0 * s2 * w)
    M = _terms((link.hop1, link.hop2), ctrl)
    k1 = SeriesKernel(link.hop1, M, 0.0, _SHIFT_ONE)
    k2 = SeriesKernel(link.hop2, M, 0.0, _SHIFT_ONE)
    shared = SharedBlock(n=0, a=((-2.0, (1.0, 1.0)),))
    pref = A1 * A2 / (z * (1.0 - z * link.d))
    return max(_mb([k1, k2], [A1, A2], shared, pref), 0.0)


def af_snr_cdf(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL, *,
               fallback: bool = True) -> float:
    """Distribution function of the end-to-end SNR (any hardware)."""
    return z_cdf(link, gamma / link.snr_scale, ctrl, fallback=fallback)


def af_snr_pdf(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of the end-to-end SNR (any hardware)."""
    return z_pdf(link, gamma / link.snr_scale, ctrl) / link.snr_scale


def af_ideal_cdf(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL, *,
                 fallback: bool = True) -> float:
    """SNR distribution with ideal hardware (c_i = P_i, d = 0)."""
    return af_snr_cdf(link.ideal_copy(), gamma, ctrl, fallback=fallback)


def af_ideal_pdf(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    return af_snr_pdf(link.ideal_copy(), gamma, ctrl)


# ---------------------------------------------------------------------------
# optimal power split
# ---------------------------------------------------------------------------

def _max_scales(link: AfLink, gamma: float):
    P = link.budget
    tau2 = link.noise * gamma / (2.0 * P)
    B1 = tau2 / (2.0 * link.hop1.sigma2)
    B2 = tau2 / (2.0 * link.hop2.sigma2)
    return tau2, B1, B2


def af_max_snr_cdf(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL, *,
                   fallback: bool = True) -> float:
    """SNR distribution under per-realization optimal power split (ideal hardware).

    The SNR is (2P/o^2) T^2 with T = r1 r2 / (r1 + r2) for envelopes r_i.
    """
    return _closed_or_quad(lambda: _max_cdf_closed(link, gamma, ctrl),
                           lambda: af_max_snr_cdf_quad(link, gamma, ctrl), fallback, "max-SNR distribution")


def _max_cdf_closed(link: AfLink, gamma: float, ctrl: SeriesControl) -> float:
    if not gamma >= 0:
        raise ValueError("argument must be non-negative")
    if gamma == 0.0:
        return 0.0
    tau2, B1, B2 = _max_scales(link, gamma)
    M = _terms((link.hop1, link.hop2), ctrl)
    k1 = SeriesKernel(link.hop1, M, 1.0, _CDF_FIRST_ENV)
    k2 = SeriesKernel(link.hop2, M, 0.0, _SHIFT_TWO)
    shared = SharedBlock(n=0, a=((-1.0, (2.0, 2.0)),))
    head = cdf_squared(link.hop2, tau2, ctrl)
    return _clamp(head + _mb([k1, k2], [B1, B2], shared, 2.0 * B2), "max-SNR distribution")


def af_max_snr_pdf(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """SNR density under per-realization optimal power split (ideal hardware)."""
    if not gamma > 0:
        raise ValueError("density evaluated for gamma > 0")
    tau2, B1, B2 = _max_scales(link, gamma)
    M = _terms((link.hop1, link.hop2), ctrl)
    k1 = SeriesKernel(link.hop1, M, 0.0, _SHIFT_TWO)
    k2 = SeriesKernel(link.hop2, M, 0.0, _SHIFT_TWO)
    shared = SharedBlock(n=0, a=((-4.0, (2.0, 2.0)),))
    # f_T(tau) = (4 / tau) B1 B2 I and d tau / d gamma = tau / (2 gamma)
    return max(_mb([k1, k2], [B1, B2], shared, 2.0 * B1 * B2 / gamma), 0.0)


def af_max_snr_cdf_quad(link: AfLink, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Quadrature route for the max-SNR distribution.

    T < tau iff 1/r1 + 1/r2 > 1/tau, which is the generic form with
    envelopes in place of gains and c1 = c2 = 1, d = 0.
    """
    if gamma <= 0:
        return 0.0
    tau = math.sqrt(link.noise * gamma / (2.0 * link.budget))

    def F1(r):
        return cdf_squared(link.hop1, r * r, ctrl)

    def f2(r):
        return 2.0 * r * pdf_squared(link.hop2, r * r, ctrl)

    return af_cdf_generic(F1, f2, 1.0, 1.0, 0.0, tau)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def af_outage(
    link: AfLink,
    gamma_th: float,
    mode: str = "any-power",
    ctrl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Outage probability at threshold ``gamma_th``."""
    if not gamma_th > 0:
        raise ValueError("threshold must be positive")
    if mode == "any-power":
        return af_snr_cdf(link, gamma_th, ctrl)
    if mode == "optimal-power":
        _require_ideal(link)
        return af_max_snr_cdf(link, gamma_th, ctrl)
    raise ValueError(f"unknown power mode {mode!r}")


def _require_ideal(link: AfLink) -> None:
    if not link.hardware.ideal:
        raise ValueError("the optimal power split is defined for ideal hardware only")


def _incomplete_term(hop: FtrParams, M: int, alpha: float, p: float, q: float) -> float:
    """sum_j w_j q^p/(2 Gamma(p)) int exp(-q g) g^(p-1) P(j+1, alpha g) dg.

    Term j is Gamma(p+nu)/(2 Gamma(nu) Gamma(p) nu) x^nu 2F1(nu, p+nu; nu+1; -x)
    with nu = j + 1 and x = alpha/q.  Since x^nu 2F1 = nu B(nu, p) I_{x/(1+x)}(nu, p)
    the term is I_{x/(1+x)}(nu, p) / 2, which stays finite for any x.
    """
    w = np.exp(np.asarray(log_series_weights(hop, M)))
    x = alpha / q
    nu = np.arange(1.0, w.size + 1.0)
    return math.fsum(w * special.betainc(nu, p, x / (1.0 + x)) / 2.0)


def af_abep(
    link: AfLink,
    p: float,
    q: float,
    mode: str = "any-power",
    ctrl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Average bit-error probability for the binary pair (p, q).

    ``any-power`` uses the link's P1, P2; ``optimal-power`` splits the budget
    (P1 + P2)/2 per realization.  Ideal hardware uses the closed form (one
    incomplete-gamma series plus a two-variable Mellin-Barnes term);
    impaired hardware integrates the SNR distribution numerically.
    """
    if not (p > 0 and q > 0):
        raise ValueError("modulation parameters must be positive")
    if mode not in ("any-power", "optimal-power"):
        raise ValueError(f"unknown power mode {mode!r}")
    if mode == "any-power" and not link.hardware.ideal:
        ceiling = 1.0 / link.hardware.d_h if link.hardware.d_h > 0 else None
        return abep_from_cdf(lambda g: af_snr_cdf(link, g, ctrl), p, q, ceiling=ceiling)
    if mode == "optimal-power":
        _require_ideal(link)
    M = _terms((link.hop1, link.hop2), ctrl)
    if mode == "any-power":
        a1 = link.noise / (2.0 * link.hop1.sigma2 * link.P1)
        a2 = link.noise / (2.0 * link.hop2.sigma2 * link.P2)
        k1 = SeriesKernel(link.hop1, M, 1.0, _CDF_FIRST)
        k2 = SeriesKernel(link.hop2, M, 0.0, _SHIFT_ONE)
        shared = SharedBlock(n=1, a=((-p, (1.0, 1.0)), (0.0, (1.0, 1.0))))
        scale = 1.0
    else:
        P = link.budget
        a1 = link.noise / (4.0 * P * link.hop1.sigma2)
        a2 = link.noise / (4.0 * P * link.hop2.sigma2)
        k1 = SeriesKernel(link.hop1, M, 1.0, _CDF_FIRST_ENV)
        k2 = SeriesKernel(link.hop2, M, 0.0, _SHIFT_TWO)
        shared = SharedBlock(n=1, a=((-p, (1.0, 1.0)), (-1.0, (2.0, 2.0))))
        scale = 2.0
    head = _incomplete_term(link.hop2, M, a2, p, q)
    tail = _mb([k1, k2], [a1 / q, a2 / q], shared, scale * (a2 / q) / (2.0 * special.gamma(p)))
    return float(min(max(head + tail, 0.0), 0.5))
