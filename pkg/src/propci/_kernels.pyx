# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Function-for-function port of :mod:`propci._kernels_py`; the two modules
must stay numerically interchangeable (see tests/test_kernels.py).
"""
from libc.math cimport log, log1p, exp, sqrt, lgamma, fabs, floor, pow, INFINITY

cdef double LN_2PI = 1.837877066409345483560659472811
cdef double LN_SQRT_2PI = 0.918938533204672741780329736406
cdef double SQRT_2PI = 2.506628274631000502415765284811

cdef double S0 = 1.0 / 12.0
cdef double S1 = 1.0 / 360.0
cdef double S2 = 1.0 / 1260.0
cdef double S3 = 1.0 / 1680.0
cdef double S4 = 1.0 / 1188.0

cdef double EPS = 2.220446049250313e-16
cdef double FPMIN = 1e-300
cdef int CF_MAXIT = 20000
cdef int ROOT_MAXIT = 200
cdef double TIE_RTOL = 1e-10

COMPILED = True

ctypedef double (*objective)(double, void*) noexcept nogil


cdef double _stirlerr(double z) noexcept nogil:
    cdef double z2
    if z <= 15.0:
        return lgamma(z + 1.0) - (z + 0.5) * log(z) + z - LN_SQRT_2PI
    z2 = z * z
    if z > 500.0:
        return (S0 - S1 / z2) / z
    if z > 80.0:
        return (S0 - (S1 - S2 / z2) / z2) / z
    if z > 35.0:
        return (S0 - (S1 - (S2 - S3 / z2) / z2) / z2) / z
    return (S0 - (S1 - (S2 - (S3 - S4 / z2) / z2) / z2) / z2) / z


cdef double _bd0(double x, double m) noexcept nogil:
    cdef double v, s, s1, ej
    cdef int j
    if m == 0.0:
        return INFINITY if x > 0.0 else 0.0
    if x == 0.0:
        return m
    if fabs(x - m) < 0.1 * (x + m):
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
    return x * log(x / m) + m - x


cdef double _log_binom_pmf(long x, long n, double p) noexcept nogil:
    cdef double lc, lf
    if p == 0.0:
        return 0.0 if x == 0 else -INFINITY
    if p == 1.0:
        return 0.0 if x == n else -INFINITY
    if x == 0:
        return n * log1p(-p)
    if x == n:
        return n * log(p)
    lc = (_stirlerr(<double>n) - _stirlerr(<double>x) - _stirlerr(<double>(n - x))
          - _bd0(<double>x, n * p) - _bd0(<double>(n - x), n * (1.0 - p)))
    lf = LN_2PI + log(<double>x) + log1p(-(<double>x) / n)
    return lc - 0.5 * lf


cdef double _log_beta_prefactor(double a, double b, double x) noexcept nogil:
    cdef double s = a + b
    return (_stirlerr(s) - _stirlerr(a) - _stirlerr(b)
            - _bd0(a, s * x) - _bd0(b, s * (1.0 - x))
            + 0.5 * (log(a) + log(b) - log(s) - LN_2PI))


cdef double _betacf(double a, double b, double x) noexcept nogil:
    cdef double qab = a + b, qap = a + 1.0, qam = a - 1.0
    cdef double c = 1.0, d, h, aa, de
    cdef int m, m2
    d = 1.0 - qab * x / qap
    if fabs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        de = d * c
        h *= de
        if fabs(de - 1.0) < EPS:
            break
    return h


cdef double _betainc(double a, double b, double x) noexcept nogil:
    cdef double pf
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    pf = exp(_log_beta_prefactor(a, b, x))
    if x < (a + 1.0) / (a + b + 2.0):
        return pf * _betacf(a, b, x) / a
    return 1.0 - pf * _betacf(b, a, 1.0 - x) / b


cdef double _beta_density(double a, double b, double x) noexcept nogil:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return exp(_log_beta_prefactor(a, b, x)) / (x * (1.0 - x))


cdef double _solve_increasing(objective f, objective fp, void* params,
                              double lo, double hi) noexcept nogil:
    cdef double x = 0.5 * (lo + hi), fx, xn, xt, d
    cdef int it
    for it in range(ROOT_MAXIT):
        fx = f(x, params)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        xn = 0.5 * (lo + hi)
        if fp != NULL:
            d = fp(x, params)
            if d > 0.0 and d < INFINITY:
                xt = x - fx / d
                if lo < xt < hi:
                    xn = xt
        if fabs(xn - x) <= 4.0 * EPS * fabs(xn) or hi - lo <= 4.0 * EPS * hi or hi - lo < 1e-300:
            return xn
        x = xn
    return x


cdef struct BetaQ:
    double a
    double b
    double q


cdef double _beta_obj(double t, void* p) noexcept nogil:
    cdef BetaQ* s = <BetaQ*>p
    return _betainc(s.a, s.b, t) - s.q


cdef double _beta_der(double t, void* p) noexcept nogil:
    cdef BetaQ* s = <BetaQ*>p
    return _beta_density(s.a, s.b, t)


cdef double _betaincinv(double a, double b, double q) noexcept nogil:
    cdef BetaQ s
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    s.a = a
    s.b = b
    s.q = q
    return _solve_increasing(_beta_obj, _beta_der, &s, 0.0, 1.0)


cdef struct MidP:
    double a1
    double b1
    double a2
    double b2
    double half


cdef double _midp_obj(double q, void* p) noexcept nogil:
    cdef MidP* s = <MidP*>p
    return 0.5 * (_betainc(s.a1, s.b1, q) + _betainc(s.a2, s.b2, q)) - s.half


cdef double _midp_der(double q, void* p) noexcept nogil:
    cdef MidP* s = <MidP*>p
    return 0.5 * (_beta_density(s.a1, s.b1, q) + _beta_density(s.a2, s.b2, q))


cdef struct LR:
    double x
    double n
    double lphat
    double l1phat
    double threshold


cdef double _lr_obj(double q, void* p) noexcept nogil:
    cdef LR* s = <LR*>p
    cdef double dev = s.x * (s.lphat - log(q))
    if s.x < s.n:
        dev += (s.n - s.x) * (s.l1phat - log1p(-q))
    return s.threshold - dev


cdef double _lr_der(double q, void* p) noexcept nogil:
    cdef LR* s = <LR*>p
    return s.x / q - (s.n - s.x) / (1.0 - q)


cdef double _blaker_pvalue_low(double q, long x, long n) noexcept nogil:
    cdef double t_up, limit, mean, sd, pk, ratio, cdf, nxt
    cdef long k0, k
    if x <= 0:
        return 1.0
    if q <= 0.0:
        return 0.0
    if q >= 1.0:
        return 1.0
    t_up = _betainc(<double>x, <double>(n - x + 1), q)
    limit = t_up * (1.0 + TIE_RTOL)
    mean = n * q
    sd = sqrt(mean * (1.0 - q))
    k0 = <long>floor(mean - 15.0 * sd - 10.0)
    if k0 < 0:
        k0 = 0
    if k0 >= x:
        return 1.0
    pk = exp(_log_binom_pmf(k0, n, q))
    ratio = q / (1.0 - q)
    cdf = 0.0
    for k in range(k0, x):
        nxt = cdf + pk
        if nxt > limit:
            return t_up + cdf
        cdf = nxt
        pk *= (n - k) / (k + 1.0) * ratio
    return 1.0


cdef double _blaker_lower(long x, long n, double alpha, int scan) noexcept nogil:
    cdef double lo, hi, a, b, q, m
    cdef int i, it
    cdef bint found = False
    if x <= 0:
        return 0.0
    lo = _betaincinv(<double>x, <double>(n - x + 1), 0.5 * alpha)
    hi = (<double>x) / n
    if hi <= lo:
        return lo
    if _blaker_pvalue_low(lo, x, n) > alpha:
        return lo
    a = lo
    b = hi
    for i in range(1, scan + 1):
        q = lo + (hi - lo) * i / scan
        if _blaker_pvalue_low(q, x, n) > alpha:
            b = q
            found = True
            break
        a = q
    if not found:
        return hi
    for it in range(ROOT_MAXIT):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if _blaker_pvalue_low(m, x, n) > alpha:
            b = m
        else:
            a = m
    return b


# ---------------------------------------------------------------- public API

def stirlerr(double z):
    return _stirlerr(z)


def bd0(double x, double m):
    return _bd0(x, m)


def log_binom_pmf(long x, long n, double p):
    return _log_binom_pmf(x, n, p)


def log_beta_prefactor(double a, double b, double x):
    return _log_beta_prefactor(a, b, x)


def betainc(double a, double b, double x):
    return _betainc(a, b, x)


def beta_density(double a, double b, double x):
    return _beta_density(a, b, x)


def betaincinv(double a, double b, double q):
    return _betaincinv(a, b, q)


def midp_lower(long x, long n, double alpha):
    cdef MidP s
    cdef double lo
    if x <= 0:
        return 0.0
    if x >= n:
        return pow(alpha, 1.0 / n)
    s.a1 = <double>x
    s.b1 = <double>(n - x + 1)
    s.a2 = <double>(x + 1)
    s.b2 = <double>(n - x)
    s.half = 0.5 * alpha
    lo = _betaincinv(s.a1, s.b1, s.half)
    return _solve_increasing(_midp_obj, _midp_der, &s, lo, 1.0)


def lr_lower(long x, long n, double threshold):
    cdef LR s
    if x <= 0:
        return 0.0
    s.x = <double>x
    s.n = <double>n
    s.lphat = log(<double>x) - log(<double>n)
    s.l1phat = log1p(-(<double>x) / n)
    s.threshold = threshold
    return _solve_increasing(_lr_obj, _lr_der, &s, 1e-300, (<double>x) / n)


def blaker_pvalue_low(double q, long x, long n):
    return _blaker_pvalue_low(q, x, n)


def blaker_lower(long x, long n, double alpha, int scan):
    cdef double out
    with nogil:
        out = _blaker_lower(x, n, alpha, scan)
    return out


cdef inline double _logsig(double t) noexcept nogil:
    if t > 0.0:
        return -log1p(exp(-t))
    return t - log1p(exp(t))


cdef double _gl_integral(long n, long k, double lchoose, double a, double b,
                         double mu, double sigma, const double[::1] nodes,
                         const double[::1] weights) noexcept nogil:
    cdef double half = 0.5 * (b - a), mid = 0.5 * (b + a)
    cdef double t, z, acc = 0.0
    cdef Py_ssize_t j
    for j in range(nodes.shape[0]):
        t = mid + half * nodes[j]
        z = (t - mu) / sigma
        acc += weights[j] * exp(lchoose + k * _logsig(t) + (n - k) * _logsig(-t) - 0.5 * z * z)
    return acc * half / (sigma * SQRT_2PI)


def local_average_sums(long n, const double[::1] logit_lower, const double[::1] logit_upper,
                       const double[::1] t_lo, const double[::1] t_hi,
                       const double[::1] log_choose, double mu, double sigma,
                       const double[::1] nodes, const double[::1] weights,
                       double span, double[::1] marginal_out):
    cdef double lower = 0.0, upper = 0.0, a, b, c
    cdef double left = mu - span * sigma, right = mu + span * sigma
    cdef long k
    with nogil:
        for k in range(n + 1):
            a = t_lo[k] if t_lo[k] > left else left
            b = t_hi[k] if t_hi[k] < right else right
            if b <= a:
                marginal_out[k] = 0.0
                continue
            marginal_out[k] = _gl_integral(n, k, log_choose[k], a, b, mu, sigma, nodes, weights)
            c = logit_lower[k] if logit_lower[k] < b else b
            if c > a:
                lower += _gl_integral(n, k, log_choose[k], a, c, mu, sigma, nodes, weights)
            c = logit_upper[k] if logit_upper[k] > a else a
            if c < b:
                upper += _gl_integral(n, k, log_choose[k], c, b, mu, sigma, nodes, weights)
    return lower, upper
