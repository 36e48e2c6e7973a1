"""Outage and error-rate functionals shared by both systems."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import integrate, special

from .special_functions import ConvergenceError

__all__ = ["conditional_error", "abep_from_cdf"]

# beyond u = q g of this size the weight exp(-u) u^(p-1) carries < 1e-25 of the mass
_TAIL_MASS = 1e-25


def conditional_error(gamma, p: float, q: float):
    """Binary error probability Gamma(p, q gamma) / (2 Gamma(p)) at SNR ``gamma``."""
    return 0.5 * special.gammaincc(p, q * np.asarray(gamma, dtype=float))


def abep_from_cdf(
    cdf: Callable[[float], float],
    p: float,
    q: float,
    *,
    ceiling: float | None = None,
    rtol: float = 1e-7,
) -> float:
    """ABEP = q^p / (2 Gamma(p)) int_0^inf exp(-q g) g^(p-1) F(g) dg.

    The integral is taken over u = q g up to the point where the weight's
    remaining mass is negligible (or to ``ceiling``, beyond which F is
    identically one); the remainder is added with F = 1.
    """
    if not (p > 0 and q > 0):
        raise ValueError("modulation parameters must be positive")
    log_norm = special.gammaln(p)

    def integrand(u):
        if u <= 0.0:
            return 0.0
        return 0.5 * np.exp(-u + (p - 1.0) * np.log(u) - log_norm) * cdf(u / q)

    upper = float(special.gammainccinv(p, _TAIL_MASS))
    if ceiling is not None:
        upper = min(upper, q * ceiling)
    edges = [0.0] + [e for e in (1.0, 10.0) if e < upper] + [upper]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)
        total += val
        err += e
    total += 0.5 * special.gammaincc(p, upper)
    if err > 1e3 * rtol * abs(total) + 1e-300:
        raise ConvergenceError(f"ABEP quadrature error {err:.2e} too large", partial_sum=total)
    return float(total)
