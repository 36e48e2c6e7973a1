"""Statistical comparison helpers shared by the test modules."""

import numpy as np

from ftrlink.af_relay import AfLink, HardwareProfile, af_cdf_generic
from ftrlink.ftr_model import FtrParams, cdf_squared, pdf_squared


def within_se(analytic, estimate, k=3.0):
    """True when ``analytic`` lies within ``k`` standard errors of the estimate."""
    return abs(analytic - estimate.mean) <= k * max(estimate.std_error, 1e-300)


def deciles(samples):
    return np.quantile(samples, np.linspace(0.1, 0.9, 9))


def ks_distance(samples, cdf):
    """Kolmogorov-Smirnov statistic of ``samples`` against a scalar ``cdf``."""
    x = np.sort(samples)
    F = np.array([cdf(v) for v in x])
    n = x.size
    upper = np.arange(1, n + 1) / n - F
    lower = F - np.arange(0, n) / n
    return max(upper.max(), lower.max())


# five parameter sets for the closed form against the generic integral
AF_PARAMETER_SETS = [
    AfLink(FtrParams(5, 5, 0.5, 0.5), FtrParams(10, 7, 0.7, 0.3), P1=2.0, P2=0.7, noise=0.5),
    AfLink(FtrParams(5, 5, 0.5, 0.5), FtrParams(10, 7, 0.7, 0.3), P1=2.0, P2=0.7, noise=0.5, hardware=HardwareProfile(0.1, 0.2)),
    AfLink(FtrParams(5, 3, 0.5, 0.5), FtrParams(5, 3, 0.5, 0.5), P1=1.0, P2=1.0),
    AfLink(FtrParams(2, 1, 0.25, 1.0), FtrParams(15, 1, 0.3, 2.5), P1=0.4, P2=3.0, noise=2.0,
           hardware=HardwareProfile(0.05, 0.15)),
    AfLink(FtrParams(1.5, 10, 0.9, 0.2), FtrParams(25, 3, 0.5, 0.5), P1=5.0, P2=1.5, noise=1.0,
           hardware=HardwareProfile(0.2, 0.2)),
]


def z_grid(link, points=20):
    """Log-spaced grid over Z, ending where 1 - F is still above 1e-10."""
    scale = link.hop1.upsilon * link.hop2.upsilon / (link.c1 * link.hop1.upsilon + link.c2 * link.hop2.upsilon)
    hi = 8.0 * scale
    if link.d > 0:
        hi = min(hi, 0.97 / link.d)
    while 1.0 - generic(link, hi) < 1e-10:
        hi *= 0.9
    return np.geomspace(1e-3 * scale, hi, points)


def generic(link, z):
    return af_cdf_generic(
        lambda x: cdf_squared(link.hop1, x),
        lambda x: pdf_squared(link.hop2, x),
        link.c1, link.c2, link.d, z,
    )
