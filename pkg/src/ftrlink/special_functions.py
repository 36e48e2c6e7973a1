"""Scalar special functions and Mellin-Barnes contour evaluators.

Every closed form in the package reduces to a (possibly multivariate)
Mellin-Barnes integral of gamma-function ratios.  The evaluators here use
the convention

    H(x) = (2 pi i)^-D  int  prod_i theta_i(s_i) x_i^{-s_i} psi(s) ds

with ``theta_i`` a ratio of gamma functions in one variable and ``psi`` a
ratio of gamma functions of linear forms coupling all variables.  Each
contour is a vertical line ``Re s_i = c_i`` truncated to ``|Im s_i| <= H_i``
and integrated with the trapezoidal rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy import optimize, special

__all__ = [
    "SpecialFunctionError",
    "DomainError",
    "ConvergenceError",
    "ContourError",
    "TruncationError",
    "ResolutionError",
    "ln_gamma_complex",
    "incomplete_gamma",
    "legendre_p",
    "legendre_p_orders",
    "gauss_2f1",
    "GammaBlock",
    "SharedBlock",
    "FoxHSpec",
    "MeijerGSpec",
    "ContourResult",
    "mellin_barnes",
    "meijer_g",
    "fox_h_single",
    "fox_h_multivariate",
    "fox_h_multivariate_detail",
]


class SpecialFunctionError(ValueError):
    """Base class for special-function failures."""


class DomainError(SpecialFunctionError):
    """Argument outside the supported domain (poles, branch cuts)."""


class ConvergenceError(SpecialFunctionError):
    """Series failed to converge; ``partial_sum`` holds the last iterate."""

    def __init__(self, message: str, partial_sum: float = float("nan"), terms: int = 0):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.terms = terms


class ContourError(SpecialFunctionError):
    """No admissible contour separates the pole families."""


class TruncationError(SpecialFunctionError):
    """Integrand does not decay within the maximal contour half-width."""

    def __init__(self, message: str, bound: float = float("nan")):
        super().__init__(message)
        self.bound = bound


class ResolutionError(SpecialFunctionError):
    """Refining the contour grid changed the result beyond tolerance."""

    def __init__(self, message: str, estimate: float = float("nan")):
        super().__init__(message)
        self.estimate = estimate


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------

def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def ln_gamma_complex(z: complex) -> complex:
    """Principal branch of log Gamma(z) for complex ``z``.

    Raises
    ------
    DomainError
        If ``z`` is a non-positive integer (a pole of Gamma).
    """
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"non-finite argument {z!r}")
    if z.imag == 0.0 and _is_nonpositive_integer(z.real):
        raise DomainError(f"Gamma has a pole at z = {z.real:g}")
    return complex(special.loggamma(z))


def incomplete_gamma(a: float, x: float, kind: str = "lower") -> float:
    """Non-regularized incomplete gamma function.

    ``kind="lower"`` gives gamma(a, x) = int_0^x t^{a-1} e^{-t} dt and
    ``kind="upper"`` gives Gamma(a, x) = int_x^inf t^{a-1} e^{-t} dt.
    """
    if not a > 0:
        raise DomainError(f"incomplete gamma needs a > 0, got a = {a!r}")
    if not x >= 0:
        raise DomainError(f"incomplete gamma needs x >= 0, got x = {x!r}")
    if kind == "lower":
        return float(special.gammainc(a, x) * special.gamma(a))
    if kind == "upper":
        return float(special.gammaincc(a, x) * special.gamma(a))
    raise ValueError(f"kind must be 'lower' or 'upper', got {kind!r}")


def _hyp2f1_series(a, b, c, z: float, rtol: float = 1e-16, max_terms: int = 200_000):
    """Plain Gauss series, vectorized over the parameters."""
    a, b, c = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(c, dtype=float)
    )
    term = np.ones(a.shape)
    total = np.ones(a.shape)
    scale = np.ones(a.shape)
    quiet = 0
    for k in range(max_terms):
        term = term * (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total = total + term
        scale = np.maximum(scale, np.abs(total))
        if np.all(np.abs(term) <= rtol * np.abs(total)) or np.all(term == 0.0):
            quiet += 1
            if quiet >= 2:
                return total, scale
        else:
            quiet = 0
    raise ConvergenceError(
        f"2F1 series did not converge after {max_terms} terms",
        partial_sum=float(np.ravel(total)[0]),
        terms=max_terms,
    )


def gauss_2f1(a: float, b: float, c: float, z: float, rtol: float = 1e-10) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for real ``z < 1``.

    Terminating cases are summed exactly; negative ``z`` is mapped into
    ``[0, 1)`` with the Pfaff transformation, and when ``c - a`` or
    ``c - b`` is a non-positive integer the Euler transformation turns the
    series into a finite sum.
    """
    if _is_nonpositive_integer(c):
        raise DomainError(f"2F1 undefined for c = {c:g} (non-positive integer)")
    if not z < 1.0:
        raise DomainError(f"2F1 evaluated only for z < 1, got z = {z!r}")
    if z == 0.0:
        return 1.0
    if _is_nonpositive_integer(a) or _is_nonpositive_integer(b):
        n = int(-min(x for x in (a, b) if _is_nonpositive_integer(x)))
        k = np.arange(n)
        ratios = (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        return float(1.0 + np.sum(np.cumprod(ratios)))
    if z < 0.0:
        w = z / (z - 1.0)
        if w > 0.9:
            for aa, bb in ((a, b), (b, a)):
                if c == aa + 1.0 and aa > 0 and bb > aa:
                    # 2F1(a, b; a+1; -x) = a x^-a B(a, b-a) I_{x/(1+x)}(a, b-a)
                    log_b = special.betaln(aa, bb - aa) - aa * math.log(-z)
                    return float(aa * math.exp(log_b) * special.betainc(aa, bb - aa, w))
        return (1.0 - z) ** (-a) * gauss_2f1(a, c - b, c, w, rtol)
    if _is_nonpositive_integer(c - a) or _is_nonpositive_integer(c - b):
        return (1.0 - z) ** (c - a - b) * gauss_2f1(c - a, c - b, c, z, rtol)
    # direct series; convergence is geometric for z < 1
    max_terms = int(min(2_000_000, 200 + 60.0 / max(-math.log(z), 1e-12)))
    try:
        total, _ = _hyp2f1_series(a, b, c, z, rtol=min(rtol, 1e-15), max_terms=max_terms)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"2F1({a:g}, {b:g}; {c:g}; {z:g}) did not converge; "
            f"partial sum {exc.partial_sum:.6g} after {exc.terms} terms",
            partial_sum=exc.partial_sum,
            terms=exc.terms,
        ) from None
    return float(total)


def legendre_p_orders(degree: float, orders, x: float) -> np.ndarray:
    """Legendre function of the first kind for x >= 1 at several integer orders.

    Uses the hypergeometric representation in the variable
    ``w = (x - 1)/(x + 1)``, which lies in ``[0, 1)``:

        P_nu^{-mu}(x) = w^{mu/2} ((x+1)/2)^nu / Gamma(1+mu)
                        * 2F1(-nu, mu-nu; 1+mu; w),      mu >= 0,

    and ``P_nu^{mu} = Gamma(nu+mu+1)/Gamma(nu-mu+1) P_nu^{-mu}`` for
    positive integer order.
    """
    if not x >= 1.0:
        raise DomainError(f"Legendre function evaluated only for x >= 1, got {x!r}")
    orders = np.asarray(orders)
    if not np.all(orders == np.round(orders)):
        raise DomainError("Legendre order must be an integer")
    orders = orders.astype(int)
    mu = np.abs(orders).astype(float)
    nu = float(degree)
    if x == 1.0:
        return np.where(orders == 0, 1.0, 0.0)
    w = (x - 1.0) / (x + 1.0)
    hyp, _ = _hyp2f1_series(-nu, mu - nu, 1.0 + mu, w)
    with np.errstate(divide="ignore"):
        log_pref = 0.5 * mu * math.log(w) + nu * math.log((x + 1.0) / 2.0) - special.gammaln(1.0 + mu)
    vals = hyp * np.exp(log_pref)
    pos = orders > 0
    if np.any(pos):
        # Gamma(nu+mu+1)/Gamma(nu-mu+1); the denominator may sit at a pole
        num = special.gamma(nu + mu[pos] + 1.0)
        rgam = special.rgamma(nu - mu[pos] + 1.0)
        vals = vals.copy()
        vals[pos] = vals[pos] * num * rgam
    return vals


def legendre_p(degree: float, order: int, x: float) -> float:
    """Legendre function of the first kind P_nu^mu(x), real ``x >= 1``."""
    if int(order) != order:
        raise DomainError("Legendre order must be an integer")
    return float(legendre_p_orders(degree, [int(order)], x)[0])


# ---------------------------------------------------------------------------
# Mellin-Barnes parameter sets
# ---------------------------------------------------------------------------

Pair = tuple[float, float]


def _pairs(values) -> tuple[Pair, ...]:
    return tuple((float(a), float(w)) for a, w in values)


@dataclass(frozen=True)
class GammaBlock:
    """Gamma ratio in a single contour variable.

    theta(s) = prod_{j<=m} Gamma(b_j + B_j s) prod_{j<=n} Gamma(1 - a_j - A_j s)
             / prod_{j>m} Gamma(1 - b_j - B_j s) prod_{j>n} Gamma(a_j + A_j s)

    ``a`` and ``b`` hold ``(coefficient, weight)`` pairs.
    """

    m: int
    n: int
    a: tuple[Pair, ...] = ()
    b: tuple[Pair, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", _pairs(self.a))
        object.__setattr__(self, "b", _pairs(self.b))
        if not (0 <= self.m <= len(self.b) and 0 <= self.n <= len(self.a)):
            raise ValueError("GammaBlock orders must satisfy 0<=m<=q and 0<=n<=p")
        for coef, weight in self.a + self.b:
            if not (math.isfinite(coef) and math.isfinite(weight)) or weight < 0:
                raise ValueError("GammaBlock weights must be finite and non-negative")

    def log_eval(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        out = np.zeros(s.shape, dtype=complex)
        for j, (bj, wj) in enumerate(self.b):
            if j < self.m:
                out += special.loggamma(bj + wj * s)
            else:
                out -= special.loggamma(1.0 - bj - wj * s)
        for j, (aj, wj) in enumerate(self.a):
            if j < self.n:
                out += special.loggamma(1.0 - aj - wj * s)
            else:
                out -= special.loggamma(aj + wj * s)
        return out

    def strip(self) -> tuple[float, float]:
        """Open interval of admissible ``Re s`` (left and right pole families)."""
        lo, hi = -math.inf, math.inf
        for bj, wj in self.b[: self.m]:
            if wj > 0:
                lo = max(lo, -bj / wj)
            elif _is_nonpositive_integer(bj):
                raise ContourError(f"constant factor Gamma({bj:g}) is infinite")
        for aj, wj in self.a[: self.n]:
            if wj > 0:
                hi = min(hi, (1.0 - aj) / wj)
            elif _is_nonpositive_integer(1.0 - aj):
                raise ContourError(f"constant factor Gamma({1 - aj:g}) is infinite")
        return lo, hi


@dataclass(frozen=True)
class SharedBlock:
    """Gamma ratio of linear forms coupling all contour variables.

    psi(s) = prod_{j<=n} Gamma(1 - a_j - alpha_j . s)
           / prod_{j>n} Gamma(a_j + alpha_j . s) prod_j Gamma(1 - b_j - beta_j . s)
    """

    n: int
    a: tuple[tuple[float, tuple[float, ...]], ...] = ()
    b: tuple[tuple[float, tuple[float, ...]], ...] = ()

    def __post_init__(self):
        a = tuple((float(c), tuple(float(v) for v in w)) for c, w in self.a)
        b = tuple((float(c), tuple(float(v) for v in w)) for c, w in self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not 0 <= self.n <= len(a):
            raise ValueError("SharedBlock needs 0 <= n <= len(a)")

    @property
    def dim(self) -> int:
        rows = self.a + self.b
        return len(rows[0][1]) if rows else 0

    def rows(self):
        """Yield ``(const, weights, sign, is_numerator)`` with the factor
        Gamma(const + sign * weights . s)."""
        for j, (aj, wj) in enumerate(self.a):
            if j < self.n:
                yield 1.0 - aj, np.asarray(wj), -1.0, True
            else:
                yield aj, np.asarray(wj), 1.0, False
        for bj, wj in self.b:
            yield 1.0 - bj, np.asarray(wj), -1.0, False


@dataclass(frozen=True)
class FoxHSpec:
    """Parameter set of a multivariate Fox H-function.

    ``abscissae`` and ``half_widths`` may be left as ``None`` for automatic
    placement; ``resolution`` is the minimum number of nodes per dimension.
    """

    blocks: tuple[GammaBlock, ...]
    shared: SharedBlock | None = None
    abscissae: tuple[float, ...] | None = None
    half_widths: tuple[float, ...] | None = None
    resolution: int = 2048

    def __post_init__(self):
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if len(blocks) < 1:
            raise ValueError("FoxHSpec needs at least one variable")
        if self.resolution < 64:
            raise ValueError("resolution must be at least 64")
        if self.shared is not None and self.shared.dim not in (0, len(blocks)):
            raise ValueError("shared block weight vectors must match the dimension")
        if self.abscissae is not None:
            if len(self.abscissae) != len(blocks):
                raise ValueError("one abscissa per variable is required")
            _check_contour(list(blocks), self.shared, np.asarray(self.abscissae, float))
        if self.half_widths is not None:
            if len(self.half_widths) != len(blocks) or min(self.half_widths) <= 0:
                raise ValueError("half-widths must be positive, one per variable")

    @property
    def dim(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class MeijerGSpec:
    """Meijer G-function G^{m,n}_{p,q}(x | a; b)."""

    m: int
    n: int
    p: int
    q: int
    a: tuple[float, ...] = ()
    b: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != self.p or len(self.b) != self.q:
            raise ValueError("parameter lists must have lengths p and q")
        if not (0 <= self.m <= self.q and 0 <= self.n <= self.p):
            raise ValueError("Meijer G orders need 0<=m<=q and 0<=n<=p")

    def as_block(self) -> GammaBlock:
        return GammaBlock(
            m=self.m,
            n=self.n,
            a=tuple((v, 1.0) for v in self.a),
            b=tuple((v, 1.0) for v in self.b),
        )


class Kernel(Protocol):
    """Per-variable integrand factor used by :func:`mellin_barnes`."""

    def log_eval(self, s: np.ndarray) -> np.ndarray: ...

    def strip(self) -> tuple[float, float]: ...


@dataclass
class ContourResult:
    """Value of a contour integral with diagnostics."""

    value: float
    imag: float
    error_estimate: float
    abscissae: tuple[float, ...]
    half_widths: tuple[float, ...]
    nodes: tuple[int, ...]
    noise_floor: float = 0.0
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# contour placement
# ---------------------------------------------------------------------------

_BIG = 1e3


def _constraints(kernels: Sequence[Kernel], shared: SharedBlock | None):
    """Linear constraints G c <= h whose slack is the pole distance."""
    dim = len(kernels)
    rows, rhs = [], []
    for i, ker in enumerate(kernels):
        lo, hi = ker.strip()
        if lo >= hi:
            raise ContourError(
                f"variable {i}: left poles reach {lo:g} and right poles start at {hi:g}"
            )
        e = np.zeros(dim)
        e[i] = 1.0
        if math.isfinite(lo):
            rows.append(-e)
            rhs.append(-lo)
        if math.isfinite(hi):
            rows.append(e)
            rhs.append(hi)
    if shared is not None:
        for const, w, sign, is_num in shared.rows():
            if not is_num:
                continue
            wmax = float(np.max(np.abs(w))) if w.size else 0.0
            if wmax == 0.0:
                continue
            # const + sign * w.c > 0, scaled so slack measures distance
            rows.append(-sign * w / wmax)
            rhs.append(const / wmax)
    return np.array(rows).reshape(-1, dim), np.array(rhs, dtype=float)


def _check_contour(kernels, shared, c: np.ndarray) -> None:
    G, h = _constraints(kernels, shared)
    if G.size and np.any(G @ c >= h):
        raise ContourError(f"abscissae {tuple(c)} do not separate the pole families")


def _chebyshev_center(G: np.ndarray, h: np.ndarray, dim: int):
    """Point maximizing the smallest pole distance (and that distance)."""
    if G.size == 0:
        return np.zeros(dim), math.inf
    norms = np.linalg.norm(G, axis=1)
    A = np.hstack([G, norms[:, None]])
    cost = np.zeros(dim + 1)
    cost[-1] = -1.0
    bounds = [(-_BIG, _BIG)] * dim + [(0, _BIG)]
    res = optimize.linprog(cost, A_ub=A, b_ub=h, bounds=bounds, method="highs")
    if not res.success or res.x[-1] <= 0:
        raise ContourError("no vertical contour separates the pole families")
    return res.x[:dim], float(res.x[-1])


def _log_integrand_real(kernels, shared, logx, c: np.ndarray) -> float:
    total = 0.0
    for i, ker in enumerate(kernels):
        total += float(np.real(ker.log_eval(np.array([c[i]], dtype=complex))[0])) - c[i] * logx[i]
    if shared is not None:
        total += float(np.real(_shared_log(shared, c[None, :].astype(complex))[0]))
    return total


def _shared_log(shared: SharedBlock, s: np.ndarray) -> np.ndarray:
    """log psi at points ``s`` of shape (npts, D)."""
    out = np.zeros(s.shape[0], dtype=complex)
    for const, w, sign, is_num in shared.rows():
        arg = const + sign * (s @ w)
        if is_num:
            out += special.loggamma(arg)
        else:
            out -= special.loggamma(arg)
    return out


def _place_contour(kernels, shared, logx, mode: str):
    dim = len(kernels)
    G, h = _constraints(kernels, shared)
    center, radius = _chebyshev_center(G, h, dim)
    if mode == "midpoint" or not math.isfinite(radius) and G.size == 0:
        return center, radius
    margin = min(0.3, 0.45 * radius)

    def objective(c):
        val = _log_integrand_real(kernels, shared, logx, c)
        return val if math.isfinite(val) else 1e300

    if dim == 1 and G.size:
        lo_b, hi_b = center[0] - _BIG, center[0] + _BIG
        for k in range(len(h)):
            g = G[k, 0]
            bound = (h[k] - margin * abs(g)) / g
            if g > 0:
                hi_b = min(hi_b, bound)
            elif g < 0:
                lo_b = max(lo_b, bound)
        res = optimize.minimize_scalar(
            lambda v: objective(np.array([v])), bounds=(lo_b, hi_b), method="bounded",
            options={"xatol": 1e-6},
        )
        best = np.array([res.x])
    else:
        slack = h - margin * np.linalg.norm(G, axis=1) if G.size else None
        cons = [{"type": "ineq", "fun": lambda c: slack - G @ c, "jac": lambda c: -G}] if G.size else []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = optimize.minimize(
                objective, center, method="SLSQP", constraints=cons,
                options={"maxiter": 200, "ftol": 1e-10},
            )
        best = res.x if np.all(np.isfinite(res.x)) else center
        if G.size and np.any(G @ best > h - 0.9 * margin * np.linalg.norm(G, axis=1)):
            best = center
    if objective(best) > objective(center):
        best = center
    return best, radius


# ---------------------------------------------------------------------------
# contour quadrature core
# ---------------------------------------------------------------------------

_DECAY_NATS = 38.0
_MAX_HALF_WIDTH = 400.0


def _directions(dim: int) -> list[np.ndarray]:
    dirs = []
    eye = np.eye(dim)
    for i in range(dim):
        dirs.append(eye[i])
    for i in range(dim):
        for j in range(i + 1, dim):
            dirs.append(eye[i] + eye[j])
            dirs.append(eye[i] - eye[j])
    if dim > 2:
        dirs.append(np.ones(dim))
    return dirs


def _auto_half_widths(kernels, shared, logx, c: np.ndarray) -> np.ndarray:
    dim = len(kernels)
    t = np.concatenate([np.linspace(0.0, 20.0, 201)[1:], np.linspace(20.0, _MAX_HALF_WIDTH, 381)[1:]])
    t = np.concatenate([[0.0], t])
    widths = np.full(dim, 4.0)
    for d in _directions(dim):
        for sgn in (1.0, -1.0):
            pts = c[None, :] + 1j * sgn * t[:, None] * d[None, :]
            f = np.zeros(t.size)
            for i, ker in enumerate(kernels):
                f += np.real(ker.log_eval(pts[:, i])) - c[i] * logx[i]
            if shared is not None:
                f += np.real(_shared_log(shared, pts))
            f = np.where(np.isfinite(f), f, -np.inf)
            peak = np.max(f)
            alive = np.nonzero(f > peak - _DECAY_NATS)[0]
            last = alive[-1]
            if last == t.size - 1:
                raise TruncationError(
                    "integrand has not decayed by 1e-16 of its peak within "
                    f"|Im s| <= {_MAX_HALF_WIDTH:g}",
                    bound=float(np.exp(f[-1] - peak)),
                )
            reach = t[min(last + 1, t.size - 1)]
            for i in range(dim):
                if d[i] != 0:
                    widths[i] = max(widths[i], reach * abs(d[i]))
    return widths


def _grid_values(kernel, c: float, logx: float, h: float, n_half: int):
    k = np.arange(-n_half, n_half + 1)
    s = c + 1j * h * k
    logv = kernel.log_eval(s) - s * logx
    logv = np.where(np.isfinite(logv.real), logv, -np.inf + 0j)
    shift = float(np.max(logv.real))
    return np.exp(logv - shift), shift


def _shared_direction(shared: SharedBlock | None, dim: int):
    """Common direction w with every coupling row proportional to it."""
    if shared is None:
        return None, []
    rows = [(const, w, sign, is_num) for const, w, sign, is_num in shared.rows()]
    if not rows:
        return None, []
    ref = None
    scaled = []
    for const, w, sign, is_num in rows:
        if not np.any(w):
            scaled.append((const, 0.0, sign, is_num))
            continue
        if ref is None:
            ref = w / np.max(np.abs(w))
        k = np.flatnonzero(ref)[0]
        lam = w[k] / ref[k]
        if not np.allclose(w, lam * ref, rtol=1e-12, atol=1e-14):
            return "general", rows
        scaled.append((const, lam, sign, is_num))
    return ref, scaled


def _quadrature(kernels, shared, logx, c, H, nodes, stride: int = 1):
    """Tensor trapezoid sum, computed by convolution along the coupling form."""
    dim = len(kernels)
    direction, scaled = _shared_direction(shared, dim)
    if isinstance(direction, str):
        return _quadrature_direct(kernels, shared, logx, c, H, nodes, stride)

    coupled = [i for i in range(dim) if direction is not None and direction[i] != 0]
    free = [i for i in range(dim) if i not in coupled]
    log_scale = 0.0
    value = 1.0 + 0.0j
    abs_mass = 1.0
    steps = np.zeros(dim)
    # uncoupled variables integrate independently
    for i in free:
        n_half = nodes[i] // stride
        h = H[i] / (nodes[i] // 1) * stride
        g, shift = _grid_values(kernels[i], c[i], logx[i], h, n_half)
        steps[i] = h
        value *= np.sum(g) * h / (2 * math.pi)
        abs_mass *= np.sum(np.abs(g)) * h / (2 * math.pi)
        log_scale += shift
    if coupled:
        # step sizes satisfy |w_i| h_i = eta for all coupled variables
        eta = min(abs(direction[i]) * H[i] / nodes[i] for i in coupled) * stride
        conv = None
        conv_abs = None
        offset = 0
        for i in coupled:
            h = eta / abs(direction[i])
            n_half = int(math.ceil(H[i] / h))
            g, shift = _grid_values(kernels[i], c[i], logx[i], h, n_half)
            if direction[i] < 0:
                g = g[::-1]
            steps[i] = h
            log_scale += shift + math.log(h / (2 * math.pi))
            conv = g if conv is None else np.convolve(conv, g)
            conv_abs = np.abs(g) if conv_abs is None else np.convolve(conv_abs, np.abs(g))
            offset += n_half
        T = np.arange(conv.size) - offset
        u = float(np.dot(direction, c)) + 1j * eta * T
        logpsi = np.zeros(T.size, dtype=complex)
        for const, lam, sign, is_num in scaled:
            arg = const + sign * lam * u
            if is_num:
                logpsi += special.loggamma(arg)
            else:
                logpsi -= special.loggamma(arg)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            terms = np.exp(logpsi + np.log(conv.astype(complex)))
            mags = np.exp(logpsi.real + np.log(conv_abs))
        terms = np.where(np.isfinite(terms), terms, 0.0)
        mags = np.where(np.isfinite(mags), mags, 0.0)
        value *= np.sum(terms)
        abs_mass *= np.sum(mags)
    return value, abs_mass, log_scale, steps


def _quadrature_direct(kernels, shared, logx, c, H, nodes, stride: int = 1):
    """Plain tensor-product trapezoid sum (independent reference path)."""
    dim = len(kernels)
    axes = []
    logs = []
    steps = np.zeros(dim)
    log_scale = 0.0
    for i in range(dim):
        n_half = nodes[i] // stride
        h = H[i] / nodes[i] * stride
        k = np.arange(-n_half, n_half + 1)
        s = c[i] + 1j * h * k
        axes.append(s)
        logs.append(kernels[i].log_eval(s) - s * logx[i])
        steps[i] = h
        log_scale += math.log(h / (2 * math.pi))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    logf = np.zeros(pts.shape[0], dtype=complex)
    lmesh = np.meshgrid(*logs, indexing="ij")
    for lm in lmesh:
        logf += lm.ravel()
    if shared is not None:
        logf += _shared_log(shared, pts)
    logf = np.where(np.isfinite(logf.real), logf, -np.inf + 0j)
    shift = float(np.max(logf.real))
    vals = np.exp(logf - shift)
    return np.sum(vals), np.sum(np.abs(vals)), log_scale + shift, steps


def mellin_barnes(
    kernels: Sequence[Kernel],
    x: Sequence[float],
    shared: SharedBlock | None = None,
    *,
    abscissae: Sequence[float] | None = None,
    half_widths: Sequence[float] | None = None,
    resolution: int = 2048,
    placement: str = "saddle",
    method: str = "convolution",
    imag_tol: float = 1e-7,
    rtol: float | None = None,
    log_factor: float = 0.0,
) -> ContourResult:
    """Evaluate a multivariate Mellin-Barnes integral with kernel x^{-s}.

    Parameters
    ----------
    kernels
        One factor per contour variable, each exposing ``log_eval`` and
        ``strip``.
    x
        Positive arguments, one per variable.
    shared
        Optional coupling factor.
    placement
        ``"saddle"`` minimizes the on-axis integrand magnitude subject to a
        pole margin (limits cancellation in tails); ``"midpoint"`` uses the
        point farthest from all poles.
    method
        ``"convolution"`` exploits a coupling that depends on one linear
        form; ``"direct"`` sums the full tensor grid.
    rtol
        When given, raise :class:`ResolutionError` if the half-resolution
        grid differs from the full grid by more than this relative amount.
    log_factor
        Logarithm of a constant multiplying the integral, applied before
        exponentiation so large prefactors and small integrals do not
        overflow separately.
    """
    kernels = list(kernels)
    dim = len(kernels)
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"expected {dim} arguments, got {x.shape}")
    if np.any(~(x > 0)) or np.any(~np.isfinite(x)):
        raise DomainError(f"arguments must be positive and finite, got {x}")
    logx = np.log(x)
    if abscissae is None:
        c, _ = _place_contour(kernels, shared, logx, placement)
    else:
        c = np.asarray(abscissae, dtype=float)
        _check_contour(kernels, shared, c)
    if half_widths is None:
        H = _auto_half_widths(kernels, shared, logx, c)
    else:
        H = np.asarray(half_widths, dtype=float)
    G, hvec = _constraints(kernels, shared)
    margin = float(np.min((hvec - G @ c) / np.linalg.norm(G, axis=1))) if G.size else 1.0
    margin = max(min(margin, 1.0), 1e-3)
    # trapezoid error ~ exp(-2 pi margin / h): keep h <= 2 pi margin / 40
    h_needed = 2.0 * math.pi * margin / 40.0
    nodes = []
    for i in range(dim):
        n_half = max(resolution // 2, int(math.ceil(H[i] / h_needed)))
        n_half = min(n_half, 1 << 17 if dim == 1 else 1 << 13)
        nodes.append(2 * ((n_half + 1) // 2))
    quad = _quadrature if method == "convolution" else _quadrature_direct

    val, mass, log_scale, steps = quad(kernels, shared, logx, c, H, nodes)
    coarse, _, log_scale2, _ = quad(kernels, shared, logx, c, H, nodes, stride=2)
    if max(log_scale, log_scale2) + log_factor > 700.0:
        raise ContourError(
            "integrand magnitude exceeds double range; the result is lost to cancellation"
        )
    scale = math.exp(log_scale + log_factor)
    value = complex(val) * scale
    value2 = complex(coarse) * math.exp(log_scale2 + log_factor)
    abs_mass = float(mass) * scale
    n_total = float(np.prod([2 * n + 1 for n in nodes]))
    noise = 4.0 * np.finfo(float).eps * abs_mass * math.sqrt(n_total)
    err = abs(value.real - value2.real) + noise
    if abs(value.imag) > imag_tol * abs(value.real) + noise:
        raise ContourError(
            f"imaginary residue {value.imag:.3e} exceeds {imag_tol:g} of |value| = "
            f"{abs(value.real):.3e}"
        )
    if rtol is not None and err > rtol * abs(value.real) + noise:
        raise ResolutionError(
            f"resolution doubling changed the result by {err:.3e} "
            f"(value {value.real:.6e}); increase resolution",
            estimate=err,
        )
    return ContourResult(
        value=float(value.real),
        imag=float(value.imag),
        error_estimate=float(err),
        abscissae=tuple(float(v) for v in c),
        half_widths=tuple(float(v) for v in H),
        nodes=tuple(nodes),
        noise_floor=float(noise),
    )


# ---------------------------------------------------------------------------
# public evaluators
# ---------------------------------------------------------------------------

def meijer_g(spec: MeijerGSpec, x: float, *, resolution: int = 4096, placement: str = "saddle") -> float:
    """Meijer G-function for real ``x > 0``.

    Uses the conjugate symmetry of the integrand, so only the upper half of
    the line is sampled.  ``placement`` is ``"saddle"`` (the abscissa that
    minimizes the on-axis integrand, keeping relative accuracy when the
    value is far below the integrand scale) or ``"midpoint"``.
    """
    if not x > 0:
        raise DomainError(f"Meijer G evaluated only for x > 0, got {x!r}")
    if placement not in ("saddle", "midpoint"):
        raise ValueError(f"unknown placement {placement!r}")
    block = spec.as_block()
    logx = math.log(x)
    lo, hi = block.strip()
    if lo >= hi:
        raise ContourError(f"pole families overlap: left {lo:g}, right {hi:g}")
    if math.isinf(lo) and math.isinf(hi):
        c = 0.0
    elif math.isinf(lo):
        c = hi - 0.5
    elif math.isinf(hi):
        c = lo + 0.5
    else:
        c = 0.5 * (lo + hi)
    if placement == "saddle" and (math.isfinite(lo) or math.isfinite(hi)):
        c = float(_place_contour([block], None, np.array([logx]), "saddle")[0][0])
    margin = min(c - lo, hi - c, 1.0)
    H = float(_auto_half_widths([block], None, np.array([logx]), np.array([c]))[0])
    h = min(2.0 * H / resolution, 2.0 * math.pi * margin / 40.0)
    t = np.arange(0, int(math.ceil(H / h)) + 1) * h
    s = c + 1j * t
    logv = block.log_eval(s) - s * logx
    shift = float(np.max(logv.real))
    vals = np.exp(logv - shift)
    w = np.full(t.size, 2.0)
    w[0] = 1.0
    total = np.sum(w * vals) * h / (2 * math.pi)
    result = total * math.exp(shift)
    # the half-line sum is complex; its real part is the symmetric integral
    return float(result.real)


def _block_of(block) -> GammaBlock:
    if isinstance(block, MeijerGSpec):
        return block.as_block()
    return block


def fox_h_multivariate_detail(spec: FoxHSpec, x: Sequence[float], **kwargs) -> ContourResult:
    """Multivariate Fox H-function with quadrature diagnostics."""
    if len(x) != spec.dim:
        raise ValueError(f"expected {spec.dim} arguments, got {len(x)}")
    return mellin_barnes(
        [_block_of(b) for b in spec.blocks],
        x,
        spec.shared,
        abscissae=spec.abscissae,
        half_widths=spec.half_widths,
        resolution=spec.resolution,
        **kwargs,
    )


def fox_h_multivariate(spec: FoxHSpec, x: Sequence[float], **kwargs) -> float:
    """Multivariate Fox H-function; ``D = 1`` reduces to the single-variable case."""
    return fox_h_multivariate_detail(spec, x, **kwargs).value


def fox_h_single(spec: FoxHSpec, x: float, **kwargs) -> float:
    """Single-variable Fox H-function."""
    if spec.dim != 1:
        raise ValueError("fox_h_single needs a one-variable spec")
    return fox_h_multivariate(spec, [x], imag_tol=kwargs.pop("imag_tol", 1e-9), **kwargs)


def vectorize_kernel(fn: Callable[[np.ndarray], np.ndarray], strip: tuple[float, float]) -> Kernel:
    """Wrap a log-integrand callable as a :class:`Kernel`."""

    class _Wrapped:
        def log_eval(self, s):
            return fn(np.asarray(s, dtype=complex))

        def strip(self):
            return strip

    return _Wrapped()


def warn_once(message: str, category=RuntimeWarning) -> None:
    warnings.warn(message, category, stacklevel=3)
