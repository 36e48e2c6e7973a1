"""Products of FTR envelopes and sums of such products.

For a chain of N independent envelopes X = R_1 ... R_N the Mellin transform
factorizes,

    E[X^s] = prod_l sum_j w_{l,j} (2 sigma_l^2)^{s/2} Gamma(1 + j + s/2) / j!,

so every statistic is a Mellin-Barnes integral over this moment function.
The multi-index series is folded into the integrand: a box truncation
``j_l <= M`` for every index is exactly the product of per-hop truncated
sums.  For sums Y = X_1 + ... + X_L the distribution function is

    F_Y(y) = (2 pi i)^-L int prod_i [Gamma(-s_i) E[X_i^{s_i}] y^{-s_i}]
             / Gamma(1 - s_1 - ... - s_L) ds,       -2 < Re s_i < 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .ftr_model import (
    DEFAULT_CONTROL,
    FtrParams,
    SeriesControl,
    effective_terms,
    log_series_weights,
    series_mass,
)
from .special_functions import (
    FoxHSpec,
    GammaBlock,
    MeijerGSpec,
    SharedBlock,
    fox_h_multivariate,
    fox_h_single,
    meijer_g,
    mellin_barnes,
)

__all__ = [
    "MAX_CONTOUR_DIM",
    "DimensionCapError",
    "HopChain",
    "ChainBank",
    "MomentKernel",
    "ScaledKernel",
    "product_moment",
    "product_pdf",
    "product_cdf",
    "product_mgf",
    "product_cdf_by_terms",
    "product_pdf_by_terms",
    "product_mgf_by_terms",
    "sum_product_pdf",
    "sum_product_cdf",
    "sum_product_cdf_by_terms",
    "truncation_error",
    "bank_terms",
]

MAX_CONTOUR_DIM = 4


class DimensionCapError(ValueError):
    """Closed form requested beyond the contour-dimension cap."""


@dataclass(frozen=True)
class HopChain:
    """Cascade of independent FTR envelopes whose product is studied."""

    hops: tuple[FtrParams, ...]

    def __post_init__(self):
        hops = tuple(self.hops)
        object.__setattr__(self, "hops", hops)
        if len(hops) < 1:
            raise ValueError("a chain needs at least one hop")

    @property
    def N(self) -> int:
        return len(self.hops)


@dataclass(frozen=True)
class ChainBank:
    """L chains, one per RIS element, whose products are summed."""

    chains: tuple[HopChain, ...]

    def __post_init__(self):
        chains = tuple(self.chains)
        object.__setattr__(self, "chains", chains)
        if len(chains) < 1:
            raise ValueError("a bank needs at least one chain")
        if len({c.N for c in chains}) != 1:
            raise ValueError("all chains must have the same number of hops")

    @property
    def L(self) -> int:
        return len(self.chains)

    def all_hops(self) -> list[FtrParams]:
        return [h for c in self.chains for h in c.hops]


def _check_chain(chain: HopChain) -> None:
    if chain.N > MAX_CONTOUR_DIM:
        raise DimensionCapError(
            f"closed forms support at most {MAX_CONTOUR_DIM} hops per chain, got N={chain.N}"
        )


def _check_bank(bank: ChainBank) -> None:
    if bank.L > MAX_CONTOUR_DIM:
        raise DimensionCapError(
            f"closed-form sum statistics are capped at L <= {MAX_CONTOUR_DIM} contour "
            f"dimensions (got L={bank.L}); use the Monte-Carlo path (mc-validate) instead"
        )
    for c in bank.chains:
        _check_chain(c)


class MomentKernel:
    """log E[X^s] for a chain, with the series truncated at index M.

    Optional extra gamma factors (``lead``) multiply the moment function,
    e.g. Gamma(-s) for distribution functions.
    """

    def __init__(self, chain: HopChain, M: int, lead: GammaBlock | None = None):
        self.chain = chain
        self.M = int(M)
        self.lead = lead
        j = np.arange(self.M + 1)
        self._hops = []
        for hop in chain.hops:
            logw = np.asarray(log_series_weights(hop, self.M)) - special.gammaln(j + 1.0)
            keep = np.isfinite(logw)
            self._hops.append((j[keep].astype(float), logw[keep], math.log(2.0 * hop.sigma2)))

    def log_moment(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        out = np.zeros(s.shape, dtype=complex)
        for j, logw, log_scale in self._hops:
            terms = logw[:, None] + special.loggamma(1.0 + j[:, None] + 0.5 * s[None, :])
            top = np.max(terms.real, axis=0)
            out += top + np.log(np.sum(np.exp(terms - top), axis=0)) + 0.5 * s * log_scale
        return out

    def log_eval(self, s: np.ndarray) -> np.ndarray:
        out = self.log_moment(s)
        if self.lead is not None:
            out = out + self.lead.log_eval(s)
        return out

    def strip(self) -> tuple[float, float]:
        lo, hi = -2.0, math.inf
        if self.lead is not None:
            llo, lhi = self.lead.strip()
            lo, hi = max(lo, llo), min(hi, lhi)
        return lo, hi


class ScaledKernel:
    """Kernel with its argument scaled, s -> k s (k > 0)."""

    def __init__(self, base, k: float):
        self.base = base
        self.k = float(k)

    def log_eval(self, s):
        return self.base.log_eval(self.k * np.asarray(s, dtype=complex))

    def strip(self):
        lo, hi = self.base.strip()
        return lo / self.k, hi / self.k


# Gamma(-s) / Gamma(1 - s) = -1/s : Mellin transform of a distribution function
CDF_LEAD = GammaBlock(m=0, n=1, a=((1.0, 1.0),), b=((0.0, 1.0),))
# Gamma(-s): Laplace transform kernel
MGF_LEAD = GammaBlock(m=0, n=1, a=((1.0, 1.0),), b=())


def chain_terms(chain: HopChain, ctrl: SeriesControl) -> int:
    return effective_terms(list(chain.hops), ctrl)


def bank_terms(bank: ChainBank, ctrl: SeriesControl) -> int:
    return effective_terms(bank.all_hops(), ctrl)


def product_moment(chain: HopChain, s: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """E[X^s] for the product of the chain's envelopes (truncated series)."""
    if not s > -2.0:
        raise ValueError(f"moments exist for s > -2 only, got s={s!r}")
    M = chain_terms(chain, ctrl)
    val = MomentKernel(chain, M).log_moment(np.array([s], dtype=complex))[0]
    return float(math.exp(val.real))


def product_pdf(chain: HopChain, x: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of the product X."""
    _check_chain(chain)
    if not x > 0:
        raise ValueError(f"density evaluated for x > 0, got {x!r}")
    M = chain_terms(chain, ctrl)
    res = mellin_barnes([MomentKernel(chain, M)], [x])
    return max(res.value / x, 0.0)


def product_cdf(chain: HopChain, x: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Distribution function of the product X."""
    _check_chain(chain)
    if not x >= 0:
        raise ValueError(f"distribution evaluated for x >= 0, got {x!r}")
    if x == 0:
        return 0.0
    M = chain_terms(chain, ctrl)
    res = mellin_barnes([MomentKernel(chain, M, CDF_LEAD)], [x])
    return min(max(res.value, 0.0), 1.0)


def product_mgf(chain: HopChain, s: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """E[exp(-s X)] for s > 0."""
    _check_chain(chain)
    if not s > 0:
        raise ValueError(f"MGF evaluated for s > 0, got {s!r}")
    M = chain_terms(chain, ctrl)
    res = mellin_barnes([MomentKernel(chain, M, MGF_LEAD)], [1.0 / s])
    return res.value


# ----------------------------------------------------------------------------
# literal multi-index forms (one special function per index tuple)
# ----------------------------------------------------------------------------

def _index_weights(chain: HopChain, M: int):
    """Yield (j tuple, prod_l w_{l,j_l} / j_l!) over the box j_l <= M."""
    tables = [np.exp(np.asarray(log_series_weights(h, M)) - special.gammaln(np.arange(M + 1) + 1.0))
              for h in chain.hops]
    for idx in itertools.product(range(M + 1), repeat=chain.N):
        w = math.prod(float(tables[l][j]) for l, j in enumerate(idx))
        if w > 0:
            yield idx, w


def product_cdf_by_terms(chain: HopChain, x: float, M: int) -> float:
    """Sum of Meijer-G terms G^{N,1}_{1,N+1}(x^2 / prod 2 sigma^2 | 1; 1+j, 0)."""
    arg = x * x / math.prod(2.0 * h.sigma2 for h in chain.hops)
    total = 0.0
    for idx, w in _index_weights(chain, M):
        spec = MeijerGSpec(chain.N, 1, 1, chain.N + 1, (1.0,), tuple(1.0 + j for j in idx) + (0.0,))
        total += w * meijer_g(spec, arg)
    return total


def product_pdf_by_terms(chain: HopChain, x: float, M: int) -> float:
    """(2/x) times the sum of G^{N,0}_{0,N}(x^2 / prod 2 sigma^2 | -; 1+j) terms."""
    arg = x * x / math.prod(2.0 * h.sigma2 for h in chain.hops)
    total = 0.0
    for idx, w in _index_weights(chain, M):
        spec = MeijerGSpec(chain.N, 0, 0, chain.N, (), tuple(1.0 + j for j in idx))
        total += w * meijer_g(spec, arg)
    return 2.0 * total / x


def product_mgf_by_terms(chain: HopChain, s: float, M: int) -> float:
    """Sum of H^{N,1}_{1,N}(1/(s prod sqrt(2 sigma^2)) | (1,1); (1+j, 1/2)) terms."""
    arg = 1.0 / (s * math.prod(math.sqrt(2.0 * h.sigma2) for h in chain.hops))
    total = 0.0
    for idx, w in _index_weights(chain, M):
        block = GammaBlock(m=chain.N, n=1, a=((1.0, 1.0),), b=tuple((1.0 + j, 0.5) for j in idx))
        total += w * fox_h_single(FoxHSpec((block,), resolution=1024), arg)
    return total


def sum_product_cdf_by_terms(bank: ChainBank, y: float, M: int) -> float:
    """Literal multivariate Fox-H series for the distribution of Y.

    Each index tuple contributes an L-variable H-function in the argument
    prod sqrt(2 sigma^2) / y, with per-variable factor
    Gamma(u) prod_l Gamma(1 + j_l - u/2) and coupling 1/Gamma(1 + sum u).
    """
    _check_bank(bank)
    L = bank.L
    per_chain = [list(_index_weights(c, M)) for c in bank.chains]
    shared = SharedBlock(n=0, a=((1.0, tuple([1.0] * L)),))
    xs = [math.prod(math.sqrt(2.0 * h.sigma2) for h in c.hops) / y for c in bank.chains]
    total = 0.0
    for combo in itertools.product(*per_chain):
        w = math.prod(item[1] for item in combo)
        blocks = tuple(
            GammaBlock(
                m=1,
                n=bank.chains[i].N,
                a=tuple((-float(j), 0.5) for j in combo[i][0]),
                b=((0.0, 1.0),),
            )
            for i in range(L)
        )
        spec = FoxHSpec(blocks, shared, resolution=512)
        total += w * fox_h_multivariate(spec, xs)
    return total


def _sum_kernels(bank: ChainBank, M: int, lead: GammaBlock):
    return [MomentKernel(c, M, lead) for c in bank.chains]


def sum_product_cdf(bank: ChainBank, y: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Distribution function of Y = sum of chain products."""
    _check_bank(bank)
    if not y >= 0:
        raise ValueError(f"distribution evaluated for y >= 0, got {y!r}")
    if y == 0:
        return 0.0
    M = bank_terms(bank, ctrl)
    shared = SharedBlock(n=0, a=((1.0, tuple([-1.0] * bank.L)),))
    res = mellin_barnes(_sum_kernels(bank, M, MGF_LEAD), [y] * bank.L, shared)
    return min(max(res.value, 0.0), 1.0)


def sum_product_pdf(bank: ChainBank, y: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Density of Y = sum of chain products."""
    _check_bank(bank)
    if not y > 0:
        raise ValueError(f"density evaluated for y > 0, got {y!r}")
    M = bank_terms(bank, ctrl)
    shared = SharedBlock(n=0, a=((0.0, tuple([-1.0] * bank.L)),))
    res = mellin_barnes(_sum_kernels(bank, M, MGF_LEAD), [y] * bank.L, shared)
    return max(res.value / y, 0.0)


def truncation_error(bank: ChainBank, M: int) -> float:
    """Mass deficit 1 - prod_{chains, hops} sum_{j<=M} w_j of the box-truncated series."""
    if int(M) != M or M < 1:
        raise ValueError("M must be an integer >= 1")
    log_mass = 0.0
    for hop in bank.all_hops():
        log_mass += math.log(min(series_mass(hop, int(M)), 1.0))
    return float(min(max(-math.expm1(log_mass), 0.0), 1.0))
