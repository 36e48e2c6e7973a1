"""Fluctuating two-ray (FTR) fading.

The squared FTR variate is a mixture of gamma laws,

    f(g) = sum_j w_j g^j exp(-g / 2 sigma^2) / (j! (2 sigma^2)^(j+1)),
    w_j  = m^m K^j d_j / (Gamma(m) j!),

with mixture weights summing to one.  This module computes the ``d_j``
coefficients, the truncated mixture weights and the densities, plus a
generative sampler used by the Monte-Carlo checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .special_functions import DomainError, legendre_p_orders

__all__ = [
    "FtrParams",
    "SeriesControl",
    "TruncationWarning",
    "coefficient_d",
    "coefficient_d_table",
    "log_series_weights",
    "DEFAULT_CONTROL",
    "series_weights",
    "series_mass",
    "effective_terms",
    "pdf_squared",
    "cdf_squared",
    "envelope_pdf",
    "envelope_cdf",
    "specular_amplitudes",
    "sample_envelope",
    "sample_envelope_rng",
]


class TruncationWarning(RuntimeWarning):
    """Requested accuracy not reached within ``max_terms``."""

    def __init__(self, message: str, epsilon: float = float("nan")):
        super().__init__(message)
        self.epsilon = epsilon


@dataclass(frozen=True)
class FtrParams:
    """One hop's FTR law.

    Attributes
    ----------
    m : fading severity of the specular fluctuation (> 0)
    K : specular-to-diffuse power ratio (>= 0)
    delta : similarity of the two specular waves, in [0, 1]
    sigma2 : variance of each diffuse quadrature component (> 0)
    """

    m: float
    K: float
    delta: float
    sigma2: float

    def __post_init__(self):
        for name in ("m", "K", "delta", "sigma2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.m <= 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.K < 0:
            raise ValueError(f"K must be non-negative, got {self.K}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def upsilon(self) -> float:
        """Average SNR of the squared variate, 2 sigma^2 (1 + K)."""
        return 2.0 * self.sigma2 * (1.0 + self.K)

    @classmethod
    def from_upsilon(cls, m: float, K: float, delta: float, upsilon: float) -> "FtrParams":
        """Build parameters from the average power instead of sigma^2."""
        return cls(m=m, K=K, delta=delta, sigma2=upsilon / (2.0 * (1.0 + K)))

    def shape_key(self) -> tuple[float, float, float]:
        return (self.m, self.K, self.delta)


@dataclass(frozen=True)
class SeriesControl:
    """Truncation control: keep indices ``j <= M'`` where ``M'`` is the
    smallest index whose truncation error drops below ``target_epsilon``,
    capped at ``max_terms``."""

    max_terms: int = 400
    target_epsilon: float = 1e-12
    warn: bool = True

    @classmethod
    def fixed(cls, M: int) -> "SeriesControl":
        """Keep exactly the indices 0..M, without a truncation warning."""
        return cls(max_terms=M, target_epsilon=1e-300, warn=False)

    def __post_init__(self):
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValueError("max_terms must be an integer >= 1")
        if not self.target_epsilon > 0:
            raise ValueError("target_epsilon must be positive")


DEFAULT_CONTROL = SeriesControl()

# relative accuracy demanded of the Legendre double sum before falling back
_LEGENDRE_RTOL = 1e-11


def _legendre_terms(n: int, m: float, K: float, delta: float):
    """Terms of the Legendre double sum for d_n, returned as complex values.

    d_n = sum_{k<=n} sum_{l<=k} C(n,k) (delta/2)^k C(k,l)
          Gamma(n+m+2l-k) e^{i pi (2l-k)/2} P_{n+m-1}^{k-2l}(x) R^{-(n+m)}

    with R = sqrt((m+K)^2 - (K delta)^2) and x = (m+K)/R.  The Legendre
    function here is the analytic continuation that carries the phase
    e^{-i pi mu/2} relative to the real-valued function on x > 1.
    """
    R = math.sqrt((m + K) ** 2 - (K * delta) ** 2)
    x = (m + K) / R
    k = np.arange(n + 1)[:, None]
    l = np.arange(n + 1)[None, :]
    mask = l <= k
    order = np.where(mask, k - 2 * l, 0)
    nu = n + m - 1.0
    p_real = legendre_p_orders(nu, order, x)
    lk = np.where(mask, k - l, 0)
    with np.errstate(divide="ignore"):
        log_mag = (
            special.gammaln(n + 1) - special.gammaln(n - k + 1) - special.gammaln(l + 1)
            - special.gammaln(lk + 1)
            + (k * math.log(delta / 2.0) if delta > 0 else np.where(k == 0, 0.0, -np.inf))
            + special.gammaln(n + m + 2 * l - k)
            - (n + m) * math.log(R)
        )
    # phases are powers of i; use exact quarter-turn lookup
    quarter = np.array([1.0, 1j, -1.0, -1j])
    phase_a = quarter[np.mod(2 * l - k, 4)]
    phase_p = quarter[np.mod(-order, 4)]
    terms = np.where(mask, np.exp(log_mag) * p_real * phase_a * phase_p, 0.0)
    return terms


def _d_legendre(n: int, params_key) -> tuple[float, float]:
    m, K, delta = params_key
    if delta == 0.0 or K == 0.0:
        # only k = l = 0 survives and the Legendre argument is 1
        return math.exp(special.gammaln(n + m) - (n + m) * math.log(m + K)), 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        terms = _legendre_terms(n, m, K, delta)
    total = complex(np.sum(terms))
    mag = float(np.sum(np.abs(terms)))
    if not (math.isfinite(total.real) and math.isfinite(mag)) or total.real == 0.0:
        return float("nan"), math.inf
    if abs(total.imag) > 1e-10 * abs(total.real):
        raise DomainError(f"d_{n}: imaginary residue {total.imag:.3e} is not negligible")
    cond = mag / abs(total.real)
    return total.real, cond * np.finfo(float).eps * (n + 1)


def _log_d_phase_average(ns: np.ndarray, m: float, K: float, delta: float) -> np.ndarray:
    """log d_n from the phase-average form of the same coefficient,

        d_n = (1/2 pi) int_0^{2 pi} Gamma(n+m) (1 + delta cos a)^n
              / (m + K + K delta cos a)^{n+m} da,

    integrated with the periodic trapezoid rule, refined until stable."""
    ns = np.asarray(ns, dtype=float)
    prev = None
    npts = 64
    while True:
        a = 2 * math.pi * np.arange(npts) / npts
        ca = np.cos(a)[None, :]
        with np.errstate(divide="ignore"):
            logf = ns[:, None] * np.log1p(delta * ca) - (ns[:, None] + m) * np.log(m + K + K * delta * ca)
        top = np.max(logf, axis=1, keepdims=True)
        val = top[:, 0] + np.log(np.mean(np.exp(logf - top), axis=1))
        val = val + special.gammaln(ns + m)
        if prev is not None and np.all(np.abs(val - prev) < 1e-14 * np.maximum(1.0, np.abs(val))):
            return val
        if npts > 1 << 18:
            return val
        prev = val
        npts *= 2


def coefficient_d(n: int, params: FtrParams) -> float:
    """The FTR mixture coefficient d_n.

    Evaluated from the Legendre double sum in complex arithmetic.  The sum
    alternates in sign and loses accuracy for large ``n``; when its
    condition estimate predicts a relative error above 1e-11 the value is
    taken from the phase-average integral instead.
    """
    if int(n) != n or n < 0:
        raise ValueError(f"n must be a non-negative integer, got {n!r}")
    n = int(n)
    value, err = _d_legendre(n, params.shape_key())
    if err <= _LEGENDRE_RTOL:
        return value
    log_d = _log_d_phase_average(np.array([n]), params.m, params.K, params.delta)[0]
    return float(math.exp(log_d))


@lru_cache(maxsize=512)
def _log_d_table(key: tuple[float, float, float], M: int) -> np.ndarray:
    m, K, delta = key
    out = np.empty(M + 1)
    fallback = []
    legendre_ok = True
    for n in range(M + 1):
        if legendre_ok:
            value, err = _d_legendre(n, key)
            if err <= _LEGENDRE_RTOL and value > 0:
                out[n] = math.log(value)
                continue
            # conditioning only worsens with n
            legendre_ok = False
        fallback.append(n)
    if fallback:
        out[fallback] = _log_d_phase_average(np.array(fallback), m, K, delta)
    out.setflags(write=False)
    return out


def coefficient_d_table(params: FtrParams, M: int) -> np.ndarray:
    """Natural logs of d_0 .. d_M (memoized per shape parameters)."""
    return _log_d_table(params.shape_key(), int(M))


@lru_cache(maxsize=512)
def _log_weights(key: tuple[float, float, float], M: int) -> np.ndarray:
    m, K, _ = key
    j = np.arange(M + 1)
    if K == 0.0:
        out = np.full(M + 1, -np.inf)
        out[0] = 0.0
        out.setflags(write=False)
        return out
    logd = _log_d_table(key, M)
    out = m * math.log(m) - special.gammaln(m) + j * math.log(K) + logd - special.gammaln(j + 1)
    out.setflags(write=False)
    return out


def series_weights(params: FtrParams, M: int) -> np.ndarray:
    """Mixture weights w_0 .. w_M."""
    return np.exp(_log_weights(params.shape_key(), int(M)))


def log_series_weights(params: FtrParams, M: int) -> np.ndarray:
    return _log_weights(params.shape_key(), int(M))


def series_mass(params: FtrParams, M: int) -> float:
    """Truncated mass sum_{j<=M} w_j."""
    return float(math.fsum(series_weights(params, M)))


def effective_terms(params_list, ctrl: SeriesControl) -> int:
    """Highest retained index M' for a product of independent mixtures.

    Returns the smallest M' with 1 - prod_i mass_i(M') < target_epsilon,
    or ``ctrl.max_terms`` (with a warning carrying eps) if none qualifies.
    """
    if isinstance(params_list, FtrParams):
        params_list = [params_list]
    M = ctrl.max_terms
    keys = {p.shape_key(): p for p in params_list}
    cums = [np.cumsum(series_weights(p, M)) for p in keys.values()]
    counts = [sum(1 for q in params_list if q.shape_key() == k) for k in keys]
    log_total = np.zeros(M + 1)
    for c, cnt in zip(cums, counts):
        log_total += cnt * np.log(np.minimum(c, 1.0))
    eps = -np.expm1(log_total)
    hit = np.nonzero(eps < ctrl.target_epsilon)[0]
    if hit.size:
        return int(hit[0])
    if ctrl.warn:
        warnings.warn(
            TruncationWarning(
                f"series truncated at M={M} with error {eps[-1]:.3e} "
                f"above target {ctrl.target_epsilon:.1e}",
                epsilon=float(eps[-1]),
            ),
            stacklevel=2,
        )
    return M


def _check_gamma(gamma: float) -> None:
    if not gamma >= 0:
        raise ValueError(f"argument must be non-negative, got {gamma!r}")


def pdf_squared(params: FtrParams, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of the squared FTR variate."""
    _check_gamma(gamma)
    M = effective_terms(params, ctrl)
    logw = log_series_weights(params, M)
    j = np.arange(M + 1)
    scale = 2.0 * params.sigma2
    if gamma == 0.0:
        return float(np.exp(logw[0]) / scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = logw + j * math.log(gamma / scale) - gamma / scale - special.gammaln(j + 1) - math.log(scale)
    return float(np.sum(np.exp(logt)))


def cdf_squared(params: FtrParams, gamma: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Distribution function of the squared FTR variate."""
    _check_gamma(gamma)
    if gamma == 0.0:
        return 0.0
    M = effective_terms(params, ctrl)
    w = series_weights(params, M)
    j = np.arange(M + 1)
    return float(np.sum(w * special.gammainc(j + 1.0, gamma / (2.0 * params.sigma2))))


def envelope_pdf(params: FtrParams, r: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of the envelope R = sqrt(gamma)."""
    _check_gamma(r)
    return 2.0 * r * pdf_squared(params, r * r, ctrl)


def envelope_cdf(params: FtrParams, r: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Distribution function of the envelope R = sqrt(gamma)."""
    _check_gamma(r)
    return cdf_squared(params, r * r, ctrl)


def specular_amplitudes(params: FtrParams) -> tuple[float, float]:
    """Specular amplitudes V1 >= V2 with V1^2 + V2^2 = 2 sigma^2 K and
    2 V1 V2 / (V1^2 + V2^2) = delta."""
    root = math.sqrt(max(0.0, 1.0 - params.delta ** 2))
    base = params.sigma2 * params.K
    return math.sqrt(base * (1.0 + root)), math.sqrt(base * (1.0 - root))


def sample_envelope_rng(params: FtrParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw FTR envelopes from an explicit generator."""
    if count < 1:
        raise ValueError("count must be >= 1")
    v1, v2 = specular_amplitudes(params)
    zeta = rng.gamma(shape=params.m, scale=1.0 / params.m, size=count)
    phi = rng.uniform(0.0, 2 * math.pi, size=(2, count))
    diffuse = rng.normal(0.0, math.sqrt(params.sigma2), size=(2, count))
    root = np.sqrt(zeta)
    re = root * (v1 * np.cos(phi[0]) + v2 * np.cos(phi[1])) + diffuse[0]
    im = root * (v1 * np.sin(phi[0]) + v2 * np.sin(phi[1])) + diffuse[1]
    return np.hypot(re, im)


def sample_envelope(params: FtrParams, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. FTR envelopes from a seeded counter-based stream."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return sample_envelope_rng(params, count, rng)
