"""Pure-Python implementations of the hot numerical kernels.

This module is the fallback for :mod:`propci._kernels` (the compiled
extension) and exposes the same functions with the same signatures.
Scalar routines use :mod:`math`; the two array kernels use numpy.
"""
import math

import numpy as np

LN_2PI = 1.837877066409345483560659472811
LN_SQRT_2PI = 0.918938533204672741780329736406

_S0 = 1.0 / 12.0
_S1 = 1.0 / 360.0
_S2 = 1.0 / 1260.0
_S3 = 1.0 / 1680.0
_S4 = 1.0 / 1188.0

_EPS = 2.220446049250313e-16
_FPMIN = 1e-300
_CF_MAXIT = 20000
_ROOT_MAXIT = 200
_TIE_RTOL = 1e-10

COMPILED = False


def stirlerr(z):
    """log(z!) minus its Stirling approximation log(sqrt(2 pi z) (z/e)^z)."""
    if z <= 15.0:
        return math.lgamma(z + 1.0) - (z + 0.5) * math.log(z) + z - LN_SQRT_2PI
    z2 = z * z
    if z > 500.0:
        return (_S0 - _S1 / z2) / z
    if z > 80.0:
        return (_S0 - (_S1 - _S2 / z2) / z2) / z
    if z > 35.0:
        return (_S0 - (_S1 - (_S2 - _S3 / z2) / z2) / z2) / z
    return (_S0 - (_S1 - (_S2 - (_S3 - _S4 / z2) / z2) / z2) / z2) / z


def bd0(x, m):
    """Deviance term x log(x/m) + m - x, evaluated without cancellation."""
    if m == 0.0:
        return math.inf if x > 0.0 else 0.0
    if x == 0.0:
        return m
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2.0 * x * v
        v = v * v
        for j in range(1, 1000):
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
        return s
    return x * math.log(x / m) + m - x


def log_binom_pmf(x, n, p):
    if p == 0.0:
        return 0.0 if x == 0 else -math.inf
    if p == 1.0:
        return 0.0 if x == n else -math.inf
    if x == 0:
        return n * math.log1p(-p)
    if x == n:
        return n * math.log(p)
    lc = (stirlerr(float(n)) - stirlerr(float(x)) - stirlerr(float(n - x))
          - bd0(float(x), n * p) - bd0(float(n - x), n * (1.0 - p)))
    lf = LN_2PI + math.log(x) + math.log1p(-x / n)
    return lc - 0.5 * lf


def log_beta_prefactor(a, b, x):
    """log of x^a (1-x)^b / B(a, b) for 0 < x < 1."""
    s = a + b
    return (stirlerr(s) - stirlerr(a) - stirlerr(b)
            - bd0(a, s * x) - bd0(b, s * (1.0 - x))
            + 0.5 * (math.log(a) + math.log(b) - math.log(s) - LN_2PI))


def _betacf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < _EPS:
            break
    return h


def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    pf = math.exp(log_beta_prefactor(a, b, x))
    if x < (a + 1.0) / (a + b + 2.0):
        return pf * _betacf(a, b, x) / a
    return 1.0 - pf * _betacf(b, a, 1.0 - x) / b


def beta_density(a, b, x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return math.exp(log_beta_prefactor(a, b, x)) / (x * (1.0 - x))


def _solve_increasing(f, fprime, lo, hi, max_iter=_ROOT_MAXIT):
    # Bracketing bisection; Newton steps are taken only inside the bracket.
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        xn = 0.5 * (lo + hi)
        if fprime is not None:
            d = fprime(x)
            if 0.0 < d < math.inf:
                xt = x - fx / d
                if lo < xt < hi:
                    xn = xt
        if abs(xn - x) <= 4.0 * _EPS * abs(xn) or hi - lo <= 4.0 * _EPS * hi or hi - lo < 1e-300:
            return xn
        x = xn
    return x


def betaincinv(a, b, q):
    """Quantile of the Beta(a, b) distribution."""
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    return _solve_increasing(lambda t: betainc(a, b, t) - q,
                             lambda t: beta_density(a, b, t), 0.0, 1.0)


def midp_lower(x, n, alpha):
    """Lower mid-P bound: inf{q : Pr(X >= x) - Pr(X = x)/2 > alpha/2}."""
    if x <= 0:
        return 0.0
    if x >= n:
        return alpha ** (1.0 / n)
    half = 0.5 * alpha
    a1, b1 = float(x), float(n - x + 1)
    a2, b2 = float(x + 1), float(n - x)

    def f(q):
        return 0.5 * (betainc(a1, b1, q) + betainc(a2, b2, q)) - half

    def fp(q):
        return 0.5 * (beta_density(a1, b1, q) + beta_density(a2, b2, q))

    lo = betaincinv(a1, b1, half)
    hi = 1.0
    return _solve_increasing(f, fp, lo, hi)


def lr_lower(x, n, threshold):
    """Lower root of the half-deviance x log(phat/q) + (n-x) log((1-phat)/(1-q)) = threshold."""
    if x <= 0:
        return 0.0
    phat = x / n
    lphat = math.log(x) - math.log(n)
    l1phat = math.log1p(-phat) if x < n else 0.0

    def g(q):
        dev = x * (lphat - math.log(q))
        if x < n:
            dev += (n - x) * (l1phat - math.log1p(-q))
        return threshold - dev

    def gp(q):
        return x / q - ((n - x) / (1.0 - q) if x < n else 0.0)

    return _solve_increasing(g, gp, 1e-300, phat)


def blaker_pvalue_low(q, x, n):
    """Blaker acceptability at q when x lies in the upper tail of B(n, q).

    Equals Pr(X >= x) + Pr(X <= y) with y the largest integer such that
    Pr(X <= y) <= Pr(X >= x), X ~ B(n, q); the union is the whole space
    (value 1) once y reaches x - 1.
    """
    if x <= 0:
        return 1.0
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    t_up = betainc(float(x), float(n - x + 1), q)
    limit = t_up * (1.0 + _TIE_RTOL)
    mean = n * q
    sd = math.sqrt(mean * (1.0 - q))
    k0 = int(max(0.0, math.floor(mean - 15.0 * sd - 10.0)))
    if k0 >= x:
        return 1.0
    pk = math.exp(log_binom_pmf(k0, n, q))
    ratio = q / (1.0 - q)
    cdf = 0.0
    for k in range(k0, x):
        nxt = cdf + pk
        if nxt > limit:
            return t_up + cdf
        cdf = nxt
        pk *= (n - k) / (k + 1.0) * ratio
    return 1.0


def blaker_lower(x, n, alpha, scan):
    """Lower Blaker bound inf{q : bpval(q) > alpha}, bracketed by [Clopper-Pearson, x/n]."""
    if x <= 0:
        return 0.0
    lo = betaincinv(float(x), float(n - x + 1), 0.5 * alpha)
    hi = x / n
    if hi <= lo:
        return lo
    if blaker_pvalue_low(lo, x, n) > alpha:
        return lo
    a = lo
    b = hi
    found = False
    for i in range(1, scan + 1):
        q = lo + (hi - lo) * i / scan
        if blaker_pvalue_low(q, x, n) > alpha:
            b = q
            found = True
            break
        a = q
    if not found:
        return hi
    for _ in range(_ROOT_MAXIT):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if blaker_pvalue_low(m, x, n) > alpha:
            b = m
        else:
            a = m
    return b


def _logsig(t):
    # log(1 / (1 + exp(-t))), elementwise and overflow-free
    return -np.logaddexp(0.0, -t)


def _gl_integral(n, k, lchoose, a, b, mu, sigma, nodes, weights):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[:, None] + half[:, None] * nodes[None, :]
    kk = k[:, None]
    z = (t - mu) / sigma
    lg = lchoose[:, None] + kk * _logsig(t) + (n - kk) * _logsig(-t) - 0.5 * z * z
    vals = np.exp(lg) @ weights
    return vals * half / (sigma * math.sqrt(2.0 * math.pi))


def local_average_sums(n, logit_lower, logit_upper, t_lo, t_hi, log_choose,
                       mu, sigma, nodes, weights, span, marginal_out):
    """Per-outcome truncated quadrature of the logit-normal mixed binomial.

    For each outcome x the pmf Pr(X = x | t) weighted by the N(mu, sigma^2)
    density of t = logit(p) is integrated over [A, B] (the intersection of
    mu +/- span*sigma with the outcome's pmf support [t_lo, t_hi]).  The
    full integral goes to ``marginal_out[x]``; the part below
    ``logit_lower[x]`` accumulates into the lower error and the part above
    ``logit_upper[x]`` into the upper error.  Returns (lower, upper).
    """
    k = np.arange(n + 1, dtype=float)
    a = np.maximum(mu - span * sigma, np.asarray(t_lo))
    b = np.minimum(mu + span * sigma, np.asarray(t_hi))
    live = b > a
    marginal = np.zeros(n + 1)
    if live.any():
        marginal[live] = _gl_integral(n, k[live], np.asarray(log_choose)[live],
                                      a[live], b[live], mu, sigma, nodes, weights)
    marginal_out[:] = marginal

    cut = np.minimum(b, np.asarray(logit_lower))
    sel = live & (cut > a)
    lower = 0.0
    if sel.any():
        lower = float(_gl_integral(n, k[sel], np.asarray(log_choose)[sel],
                                   a[sel], cut[sel], mu, sigma, nodes, weights).sum())
    cut = np.maximum(a, np.asarray(logit_upper))
    sel = live & (cut < b)
    upper = 0.0
    if sel.any():
        upper = float(_gl_integral(n, k[sel], np.asarray(log_choose)[sel],
                                   cut[sel], b[sel], mu, sigma, nodes, weights).sum())
    return lower, upper
