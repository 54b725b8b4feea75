"""Special functions, binomial probabilities, quadrature and root finding.

Everything the estimators and the evaluators build on.  The hot scalar
routines (incomplete beta and its inverse, the binomial pmf) come from the
kernel backend selected in :mod:`propci._backend`; this module adds domain
checks and the less performance-critical pieces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from ._backend import kernels


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class BracketError(ValueError):
    """Root-finding bracket does not straddle the target."""


class ConvergenceError(RuntimeError):
    """Iterative method stopped before reaching its tolerance."""


@dataclass(frozen=True)
class Tolerance:
    abs_p: float = 1e-10
    abs_prob: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not (self.abs_p > 0 and self.abs_prob > 0):
            raise DomainError("tolerances must be strictly positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights; ``integrate(g)`` returns sum(w * g(nodes))."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "gauss-legendre-on-interval"

    def __post_init__(self):
        for arr in (self.nodes, self.weights):
            arr.flags.writeable = False

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        if self.nodes.size == 0:
            return 0.0
        return float(np.dot(self.weights, g(self.nodes)))

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


# ------------------------------------------------------------ normal law

_A = (3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
      1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
      3.3430575583588128105e+4, 2.5090809287301226727e+3)
_B = (1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2, 5.3941960214247511077e+3,
      2.1213794301586595867e+4, 3.9307895800092710610e+4, 2.8729085735721942674e+4,
      5.2264952788528545610e+3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coef, x):
    acc = 0.0
    for c in reversed(coef):
        acc = acc * x + c
    return acc


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def normal_quantile(q: float) -> float:
    """Standard normal quantile (Wichura's AS 241 plus one Newton step)."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"normal quantile needs 0 < q < 1, got {q}")
    d = q - 0.5
    if abs(d) <= 0.425:
        r = 0.180625 - d * d
        z = d * _poly(_A, r) / _poly(_B, r)
    else:
        r = q if d < 0 else 1.0 - q
        r = math.sqrt(-math.log(r))
        if r <= 5.0:
            r -= 1.6
            z = _poly(_C, r) / _poly(_D, r)
        else:
            r -= 5.0
            z = _poly(_E, r) / _poly(_F, r)
        if d < 0:
            z = -z
    # one Newton step against erfc; keeps 1e-15 agreement with normal_cdf
    dens = normal_pdf(z)
    if dens > 0.0:
        if z > 0:
            z += (0.5 * math.erfc(z / math.sqrt(2.0)) - (1.0 - q)) / dens
        else:
            z -= (normal_cdf(z) - q) / dens
    return z


# ------------------------------------------------------------ gamma / chi-square

def reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise DomainError("shape must be positive")
    if x <= 0.0:
        return 0.0
    lpf = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(10000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return min(1.0, total * math.exp(lpf))
    # Lentz continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / 1e-300
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < 1e-300:
            d = 1e-300
        c = b + an / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < 1e-16:
            break
    return max(0.0, 1.0 - math.exp(lpf) * h)


def chi_square_cdf(x: float, df: float) -> float:
    return reg_lower_gamma(0.5 * df, 0.5 * x)


def chi_square_quantile(q: float, df: float) -> float:
    if df <= 0:
        raise DomainError("degrees of freedom must be positive")
    if not 0.0 <= q < 1.0:
        raise DomainError(f"chi-square quantile needs 0 <= q < 1, got {q}")
    if q == 0.0:
        return 0.0
    hi = max(1.0, df)
    while chi_square_cdf(hi, df) < q:
        hi *= 2.0
    return find_root_monotone(lambda y: chi_square_cdf(y, df), 0.0, hi, target=q,
                              tol=Tolerance(abs_p=1e-13 * hi, max_iter=400))


# ------------------------------------------------------------ beta / binomial

def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise DomainError(f"shapes must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    return kernels.betainc(float(a), float(b), float(x))


def reg_inc_beta_inv(a: float, b: float, q: float) -> float:
    """Beta(a, b) quantile: x with I_x(a, b) = q."""
    if a <= 0 or b <= 0:
        raise DomainError(f"shapes must be positive, got a={a}, b={b}")
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    return kernels.betaincinv(float(a), float(b), float(q))


def _check_binomial(x, n, p):
    if n < 0 or not 0 <= x <= n:
        raise DomainError(f"need 0 <= x <= n, got x={x}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")


def log_binomial_pmf(x: int, n: int, p: float) -> float:
    """log Pr(X = x) for X ~ Binomial(n, p), via saddle-point log-gamma terms."""
    _check_binomial(x, n, p)
    return kernels.log_binom_pmf(int(x), int(n), float(p))


def binomial_tail_geq(x: int, n: int, p: float) -> float:
    """Pr(X >= x) = I_p(x, n - x + 1)."""
    _check_binomial(x, n, p)
    if x == 0:
        return 1.0
    return kernels.betainc(float(x), float(n - x + 1), float(p))


@lru_cache(maxsize=256)
def log_choose_row(n: int) -> np.ndarray:
    """log C(n, k) for k = 0..n from exact integer binomial coefficients."""
    out = np.empty(n + 1)
    c = 1
    for k in range(n + 1):
        out[k] = math.log(c)
        c = c * (n - k) // (k + 1)
    out.flags.writeable = False
    return out


def binomial_pmf_matrix(n: int, ps) -> np.ndarray:
    """Matrix of Pr(X = k | p) with one row per p and one column per k = 0..n."""
    ps = np.atleast_1d(np.asarray(ps, dtype=float))
    k = np.arange(n + 1, dtype=float)
    lc = log_choose_row(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = np.log(ps)[:, None]
        lq = np.log1p(-ps)[:, None]
        lg = lc[None, :] + k[None, :] * lp + (n - k)[None, :] * lq
    # 0 * log(0) := 0 at the degenerate proportions
    lg = np.where((k[None, :] == 0) & (ps[:, None] == 0.0), 0.0, lg)
    lg = np.where((k[None, :] == n) & (ps[:, None] == 1.0), 0.0, lg)
    lg = np.where(np.isnan(lg), -np.inf, lg)
    return np.exp(lg)


def binomial_pmf(n: int, p: float) -> np.ndarray:
    return binomial_pmf_matrix(n, [p])[0]


# ------------------------------------------------------------ root finding

def find_root_monotone(f: Callable[[float], float], lo: float, hi: float, *,
                       target: float = 0.0, tol: Tolerance = DEFAULT_TOL,
                       increasing: bool = True,
                       fprime: Callable[[float], float] | None = None) -> float:
    """Bisection for a monotone f on [lo, hi].

    Returns the infimum of {q : f(q) > target} (``increasing``) or of
    {q : f(q) < target} (decreasing), to within ``tol.abs_p``.  For a
    continuous f this is the root; for a nondecreasing step function it is
    the jump location.  ``fprime`` enables a final Newton polish that is
    kept inside the bracket.
    """
    sign = 1.0 if increasing else -1.0

    def g(q):
        return sign * (f(q) - target)

    if g(lo) > 0.0 or not g(hi) > 0.0:
        raise BracketError(f"[{lo}, {hi}] does not bracket the target {target}")
    it = 0
    while hi - lo > tol.abs_p:
        if it >= tol.max_iter:
            raise ConvergenceError(f"no convergence after {tol.max_iter} iterations")
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        it += 1
    if fprime is None:
        return hi
    x = hi
    for _ in range(20):
        d = sign * fprime(x)
        if not d > 0.0:
            break
        xn = x - g(x) / d
        if not lo <= xn <= hi or xn == x:
            break
        x = xn
    return x


# ------------------------------------------------------------ quadrature

@lru_cache(maxsize=64)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    nodes, weights = np.polynomial.legendre.leggauss(m)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


TRUNCATION_SPAN = 8.0


def truncated_normal_quadrature(mu: float, sigma: float, upper_cut: float = math.inf,
                                m: int = 64, lower_cut: float = -math.inf,
                                span: float = TRUNCATION_SPAN) -> QuadratureRule:
    """Rule for the integral of g(t) N(t; mu, sigma^2) over t in [lower_cut, upper_cut].

    Gauss-Legendre on [mu - span*sigma, mu + span*sigma] intersected with
    the cut range; an empty range yields a rule with no nodes.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if m < 16:
        raise DomainError("at least 16 nodes are required")
    a = max(mu - span * sigma, lower_cut)
    b = min(mu + span * sigma, upper_cut)
    if not b > a:
        return QuadratureRule(np.empty(0), np.empty(0), "truncated-normal")
    ref_x, ref_w = gauss_legendre(m)
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * ref_x
    z = (nodes - mu) / sigma
    weights = half * ref_w * np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    return QuadratureRule(nodes, weights, "truncated-normal")


def logit(p):
    return np.log(p) - np.log1p(-p)


def invlogit(t):
    return np.exp(-np.logaddexp(0.0, -np.asarray(t, dtype=float)))
