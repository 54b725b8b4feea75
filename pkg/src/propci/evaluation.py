"""One-sided error and half-width evaluation of interval estimators.

Three regimes are supported:

* conditional: fixed n and true proportion p, exact summation over x;
* local average: the true proportion is logit-normal, logit(P) ~ N(mu,
  sigma^2) with sigma = ln(OR_S) and mu calibrated so that E[P] = p0;
* random size: fixed p, log-normally distributed sample size.

Local-average quantities are computed outcome by outcome: for each x the
mixed probability of the event {P below L(x)} (or above U(x)) is a smooth
integral over the logit scale, evaluated by Gauss-Legendre quadrature.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import numerics as nm
from ._backend import kernels
from .estimators import ConfidenceSpec, as_method, bound_table

REGIMES = ("conditional", "local_average", "random_size")
DEFAULT_NODES = 64
# pmf(x | t) < exp(-SUPPORT_DEPTH) outside the per-outcome logit support
SUPPORT_DEPTH = 45.0
SIZE_SPAN = 7.0


class EmptyRegionError(ValueError):
    """No grid point satisfies the requested restriction."""


# ---------------------------------------------------------------- data types

@dataclass(frozen=True)
class ErrorReport:
    alpha_l: float
    alpha_u: float
    regime: str = "conditional"
    se_l: float | None = None
    se_u: float | None = None

    @property
    def two_sided(self) -> float:
        return self.alpha_l + self.alpha_u

    @property
    def max_one_sided(self) -> float:
        return max(self.alpha_l, self.alpha_u)


@dataclass(frozen=True)
class HalfWidthReport:
    w_l: float
    w_u: float
    relative_to: str | None = None
    ratio_l: float | None = None
    ratio_u: float | None = None


@lru_cache(maxsize=4096)
def calibrate_mu(p0: float, sigma: float, m: int = 128) -> float:
    """Location mu with E[invlogit(mu + sigma Z)] = p0 for standard normal Z."""
    if not 0.0 < p0 < 1.0:
        raise nm.DomainError(f"p0 must lie in (0, 1), got {p0}")
    if sigma < 0:
        raise nm.DomainError("sigma must be >= 0")
    center = math.log(p0) - math.log1p(-p0)
    if sigma == 0.0:
        return center
    z, w = nm.gauss_legendre(m)
    z = nm.TRUNCATION_SPAN * z
    w = nm.TRUNCATION_SPAN * w * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    def mean(mu):
        return float(np.dot(w, nm.invlogit(mu + sigma * z)))

    step = 1.0 + sigma * sigma
    lo, hi = center - step, center + step
    while mean(lo) > p0:
        lo -= step
        step *= 2.0
    while mean(hi) <= p0:
        hi += step
        step *= 2.0
    return nm.find_root_monotone(mean, lo, hi, target=p0,
                                 tol=nm.Tolerance(abs_p=1e-12, max_iter=400))


@dataclass(frozen=True)
class RandomProportionModel:
    """Logit-normal law of the true proportion with mean ``p0``."""

    p0: float
    or_s: float = 1.2
    mu: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise nm.DomainError(f"p0 must lie in (0, 1), got {self.p0}")
        if self.or_s < 1.0:
            raise nm.DomainError(f"OR_S must be >= 1, got {self.or_s}")
        object.__setattr__(self, "mu", calibrate_mu(float(self.p0), self.sigma))

    @property
    def sigma(self) -> float:
        return math.log(self.or_s)

    def expected_successes(self, n: int) -> float:
        return n * self.p0


@dataclass(frozen=True)
class RandomSampleSizeModel:
    """Sample size N = max(1, round(n_center exp(sigma_n Z))) at fixed proportion ``p``."""

    n_center: int
    p: float
    sigma_n: float = math.log(1.2)

    def __post_init__(self):
        if self.n_center < 1:
            raise nm.DomainError("n_center must be >= 1")
        if not 0.0 < self.p < 1.0:
            raise nm.DomainError(f"p must lie in (0, 1), got {self.p}")
        if self.sigma_n < 0:
            raise nm.DomainError("sigma_n must be >= 0")

    def size_distribution(self) -> tuple[np.ndarray, np.ndarray]:
        """Support and probabilities of N, covering all but ~1e-12 of the mass."""
        if self.sigma_n == 0.0:
            return np.array([self.n_center]), np.array([1.0])
        c, s = float(self.n_center), self.sigma_n
        k_min = max(1, int(round(c * math.exp(-SIZE_SPAN * s))))
        k_max = max(k_min, int(round(c * math.exp(SIZE_SPAN * s))))
        sizes = np.arange(k_min, k_max + 1)
        # mass of round(c exp(s Z)) = k is that of Z in [z(k - 1/2), z(k + 1/2)),
        # taken from whichever tail keeps the difference accurate
        z_hi = np.log((sizes + 0.5) / c) / s
        z_lo = np.where(sizes == 1, -np.inf, np.log(np.maximum(sizes - 0.5, 0.5) / c) / s)
        right = z_lo > 0
        up_tail = _upper_tail(np.where(right, z_lo, 0.0)) - _upper_tail(np.where(right, z_hi, 0.0))
        low_tail = _upper_tail(-np.where(right, 0.0, z_hi)) - _upper_tail(-np.where(right, 0.0, z_lo))
        probs = np.where(right, up_tail, low_tail)
        return sizes, probs / probs.sum()


_erfc = np.frompyfunc(math.erfc, 1, 1)


def _upper_tail(z):
    """Pr(Z > z), elementwise."""
    return 0.5 * _erfc(np.asarray(z, dtype=float) / math.sqrt(2.0)).astype(float)


def default_lambdas() -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(0.05, 100.0, 400))


@dataclass(frozen=True)
class EvaluationGrid:
    sample_sizes: tuple[int, ...] = (32, 64, 2048)
    lambda_values: tuple[float, ...] = field(default_factory=default_lambdas)
    alpha: float = 0.05
    or_s: float = 1.2

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "lambda_values", tuple(sorted(float(v) for v in self.lambda_values)))

    def points(self) -> list[tuple[int, float]]:
        """(n, lambda) pairs with lambda / n < 1, lambda ascending within each n."""
        return [(n, lam) for n in self.sample_sizes for lam in self.lambda_values
                if 0.0 < lam < n]

    @property
    def conf(self) -> ConfidenceSpec:
        return ConfidenceSpec(self.alpha)


@dataclass(frozen=True)
class CurvePoint:
    method: str
    regime: str
    n: int
    lam: float
    errors: ErrorReport
    widths: HalfWidthReport | None = None

    @property
    def p0(self) -> float:
        return self.lam / self.n


# ---------------------------------------------------------------- bound access

BoundProvider = Callable[[int, ConfidenceSpec], tuple]


def method_name(method) -> str:
    if callable(method) and not hasattr(method, "id"):
        return getattr(method, "__name__", "custom")
    return as_method(method).id


def clamped_bounds(method, n: int, conf: ConfidenceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Clamped (lower, upper) arrays over x = 0..n.

    ``method`` is a method id, a MethodSpec, or a callable returning raw
    (lower, upper) arrays for (n, conf).
    """
    if callable(method) and not hasattr(method, "id"):
        lo, up = method(n, conf)
        return np.clip(np.asarray(lo, float), 0, 1), np.clip(np.asarray(up, float), 0, 1)
    table = bound_table(method, n, conf)
    return table.lower, table.upper


# ---------------------------------------------------------------- conditional

def conditional_error_arrays(method, n: int, ps, conf: ConfidenceSpec | None = None,
                             chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized conditional errors for many true proportions at once."""
    conf = conf or ConfidenceSpec()
    lo, up = clamped_bounds(method, n, conf)
    ps = np.atleast_1d(np.asarray(ps, dtype=float))
    out_l = np.empty(ps.size)
    out_u = np.empty(ps.size)
    for s in range(0, ps.size, chunk):
        p = ps[s:s + chunk]
        pmf = nm.binomial_pmf_matrix(n, p)
        out_l[s:s + chunk] = np.where(lo[None, :] > p[:, None], pmf, 0.0).sum(axis=1)
        out_u[s:s + chunk] = np.where(up[None, :] < p[:, None], pmf, 0.0).sum(axis=1)
    return out_l, out_u


def conditional_errors(method, n: int, p: float, conf: ConfidenceSpec | None = None) -> ErrorReport:
    if not 0.0 < p < 1.0:
        raise nm.DomainError(f"p must lie in (0, 1), got {p}")
    a_l, a_u = conditional_error_arrays(method, n, [p], conf)
    return ErrorReport(float(a_l[0]), float(a_u[0]), "conditional")


# ---------------------------------------------------------------- local average

@lru_cache(maxsize=64)
def pmf_logit_support(n: int, depth: float = SUPPORT_DEPTH) -> tuple[np.ndarray, np.ndarray]:
    """Per-outcome logit interval outside which pmf(x | t) < exp(-depth)."""
    x = np.arange(n + 1, dtype=float)
    t_lo = np.full(n + 1, -np.inf)
    t_hi = np.full(n + 1, np.inf)
    edge = math.log(math.expm1(depth / n))
    t_hi[0] = edge
    t_lo[n] = -edge
    if n > 1:
        k = x[1:n]
        ph = k / n
        center = np.log(ph) - np.log1p(-ph)

        def kl(t):
            return (k * (np.log(ph) + np.logaddexp(0.0, -t))
                    + (n - k) * (np.log1p(-ph) + np.logaddexp(0.0, t)))

        lo, hi = np.full(k.size, -800.0), center.copy()
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            far = kl(mid) > depth
            lo = np.where(far, mid, lo)
            hi = np.where(far, hi, mid)
        t_lo[1:n] = lo
        lo, hi = center.copy(), np.full(k.size, 800.0)
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            far = kl(mid) > depth
            hi = np.where(far, mid, hi)
            lo = np.where(far, lo, mid)
        t_hi[1:n] = hi
    t_lo.flags.writeable = False
    t_hi.flags.writeable = False
    return t_lo, t_hi


def _logit_bounds(b):
    with np.errstate(divide="ignore"):
        return np.ascontiguousarray(np.log(b) - np.log1p(-b))


def _local_average_core(method, n, model: RandomProportionModel, conf, m=DEFAULT_NODES):
    lo, up = clamped_bounds(method, n, conf)
    if model.sigma == 0.0:
        pmf = nm.binomial_pmf(n, model.p0)
        p = model.p0
        return float(pmf[lo > p].sum()), float(pmf[up < p].sum()), pmf, lo, up
    t_lo, t_hi = pmf_logit_support(n)
    nodes, weights = nm.gauss_legendre(m)
    marginal = np.empty(n + 1)
    a_l, a_u = kernels.local_average_sums(
        n, _logit_bounds(lo), _logit_bounds(up), t_lo, t_hi, nm.log_choose_row(n),
        model.mu, model.sigma, nodes, weights, nm.TRUNCATION_SPAN, marginal)
    return a_l, a_u, marginal, lo, up


def local_average_errors(method, n: int, model: RandomProportionModel,
                         conf: ConfidenceSpec | None = None, m: int = DEFAULT_NODES) -> ErrorReport:
    conf = conf or ConfidenceSpec()
    a_l, a_u, *_ = _local_average_core(method, n, model, conf, m)
    return ErrorReport(a_l, a_u, "local_average")


def mixed_outcome_distribution(n: int, model: RandomProportionModel, m: int = DEFAULT_NODES) -> np.ndarray:
    """Marginal Pr(X = x) of the two-step experiment, x = 0..n."""
    trivial = lambda n_, c_: (np.zeros(n_ + 1), np.ones(n_ + 1))  # noqa: E731
    return _local_average_core(trivial, n, model, ConfidenceSpec(), m)[2]


def _half_widths(marginal, lo, up, n):
    x = np.arange(n + 1) / n
    return float(np.dot(x - lo, marginal)), float(np.dot(up - x, marginal))


def local_average_half_widths(method, n: int, model: RandomProportionModel,
                              conf: ConfidenceSpec | None = None, reference=None,
                              m: int = DEFAULT_NODES) -> HalfWidthReport:
    conf = conf or ConfidenceSpec()
    _, _, marginal, lo, up = _local_average_core(method, n, model, conf, m)
    w_l, w_u = _half_widths(marginal, lo, up, n)
    if reference is None:
        return HalfWidthReport(w_l, w_u)
    r_lo, r_up = clamped_bounds(reference, n, conf)
    ref_l, ref_u = _half_widths(marginal, r_lo, r_up, n)
    return HalfWidthReport(w_l, w_u, method_name(reference),
                           w_l / ref_l if ref_l > 0 else math.nan,
                           w_u / ref_u if ref_u > 0 else math.nan)


# ---------------------------------------------------------------- random size

def random_size_errors(method, model: RandomSampleSizeModel,
                       conf: ConfidenceSpec | None = None) -> ErrorReport:
    conf = conf or ConfidenceSpec()
    sizes, probs = model.size_distribution()
    a_l = a_u = 0.0
    for k, w in zip(sizes, probs):
        el, eu = conditional_error_arrays(method, int(k), [model.p], conf)
        a_l += w * el[0]
        a_u += w * eu[0]
    return ErrorReport(float(a_l), float(a_u), "random_size")


# ---------------------------------------------------------------- curves and scans

def thread_count() -> int:
    cap = os.environ.get("PROPCI_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            pass
    return n


def _evaluate_point(method, regime, n, lam, grid: EvaluationGrid, widths, reference, m):
    conf = grid.conf
    p = lam / n
    name = method_name(method)
    if regime == "conditional":
        return CurvePoint(name, regime, n, lam, conditional_errors(method, n, p, conf))
    if regime == "random_size":
        model = RandomSampleSizeModel(n, p, math.log(grid.or_s))
        return CurvePoint(name, regime, n, lam, random_size_errors(method, model, conf))
    model = RandomProportionModel(p, grid.or_s)
    errors = local_average_errors(method, n, model, conf, m)
    hw = local_average_half_widths(method, n, model, conf, reference, m) if widths else None
    return CurvePoint(name, regime, n, lam, errors, hw)


def error_curve(method, grid: EvaluationGrid, regime: str = "local_average", *,
                widths: bool = False, reference=None, m: int = DEFAULT_NODES,
                threads: int | None = None) -> list[CurvePoint]:
    """Evaluate ``regime`` at every grid point, ordered by n then ascending lambda."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    points = grid.points()
    if regime == "conditional" and not widths:
        out = []
        for n in grid.sample_sizes:
            lams = [lam for nn, lam in points if nn == n]
            if not lams:
                continue
            a_l, a_u = conditional_error_arrays(method, n, np.array(lams) / n, grid.conf)
            out.extend(CurvePoint(method_name(method), regime, n, lam,
                                  ErrorReport(float(l), float(u), regime))
                       for lam, l, u in zip(lams, a_l, a_u))
        return out
    # build the shared bound tables before fanning out
    for n in grid.sample_sizes:
        clamped_bounds(method, n, grid.conf)
        if reference is not None:
            clamped_bounds(reference, n, grid.conf)
    workers = threads or thread_count()
    job = lambda pt: _evaluate_point(method, regime, pt[0], pt[1], grid, widths, reference, m)  # noqa: E731
    if workers <= 1 or len(points) < 2:
        return [job(pt) for pt in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, points))


@dataclass(frozen=True)
class ScanResult:
    max_error: float
    n: int
    lam: float
    side: str


def max_error_scan(method, grid: EvaluationGrid, regime: str = "conditional",
                   **kwargs) -> ScanResult:
    best = ScanResult(-1.0, 0, math.nan, "lower")
    for pt in error_curve(method, grid, regime, **kwargs):
        for side, val in (("lower", pt.errors.alpha_l), ("upper", pt.errors.alpha_u)):
            if val > best.max_error:
                best = ScanResult(val, pt.n, pt.lam, side)
    return best


@dataclass(frozen=True)
class ValidityReport:
    threshold: int
    limit: float
    max_error: float
    n: int
    lam: float
    side: str
    qualifying_points: int

    @property
    def passed(self) -> bool:
        return self.max_error <= self.limit


def validity_lambdas(n: int, count: int = 120) -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(1.0, n / 2.0, count))


def wald_validity_check(threshold: int, conf: ConfidenceSpec | None = None,
                        grid: EvaluationGrid | None = None, method="wald",
                        m: int = DEFAULT_NODES, small_prob: float = 1e-6) -> ValidityReport:
    """Worst one-sided local-average error where min(X, n - X) > threshold is near certain.

    Default grid: n in {256, 2048}, OR_S = 1.2, 120 log-spaced lambda in
    [1, n/2] per n.
    """
    if threshold < 0:
        raise nm.DomainError("threshold must be >= 0")
    conf = conf or ConfidenceSpec()
    if grid is None:
        pts = [(n, lam) for n in (256, 2048) for lam in validity_lambdas(n)]
        or_s = 1.2
    else:
        pts = grid.points()
        or_s = grid.or_s
        conf = grid.conf
    best = None
    count = 0
    for n, lam in pts:
        model = RandomProportionModel(lam / n, or_s)
        a_l, a_u, marginal, _, _ = _local_average_core(method, n, model, conf, m)
        x = np.arange(n + 1)
        if marginal[np.minimum(x, n - x) <= threshold].sum() >= small_prob:
            continue
        count += 1
        for side, val in (("lower", a_l), ("upper", a_u)):
            if best is None or val > best[0]:
                best = (val, n, lam, side)
    if best is None:
        raise EmptyRegionError(f"no grid point satisfies min(x, n - x) > {threshold} "
                               f"with probability 1 - {small_prob:g}")
    return ValidityReport(int(threshold), 1.5 * conf.alpha / 2.0, best[0], best[1], best[2],
                          best[3], count)


# ---------------------------------------------------------------- Monte-Carlo oracle

@dataclass(frozen=True)
class MonteCarloReport:
    errors: ErrorReport
    w_l: float
    w_u: float
    se_w_l: float
    se_w_u: float
    draws: int


def monte_carlo_oracle(method, model, conf: ConfidenceSpec | None = None, *,
                       n: int | None = None, draws: int = 10_000_000, seed: int,
                       chunk: int = 1_000_000) -> MonteCarloReport:
    """Simulate the two-step experiment and return empirical error rates.

    ``model`` is a RandomProportionModel (then ``n`` is required) or a
    RandomSampleSizeModel.  Independent of the quadrature path; meant for
    cross-validation only.
    """
    if draws < 100_000:
        raise nm.DomainError("at least 1e5 draws are required")
    conf = conf or ConfidenceSpec()
    rng = np.random.default_rng(seed)
    hits_l = hits_u = 0
    s_wl = s_wl2 = s_wu = s_wu2 = 0.0
    tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def table(k):
        if k not in tables:
            tables[k] = clamped_bounds(method, k, conf)
        return tables[k]

    done = 0
    while done < draws:
        size = min(chunk, draws - done)
        z = rng.standard_normal(size)
        if isinstance(model, RandomProportionModel):
            if n is None:
                raise ValueError("n is required with a RandomProportionModel")
            p = nm.invlogit(model.mu + model.sigma * z)
            sizes = np.full(size, n)
        else:
            p = np.full(size, model.p)
            sizes = np.maximum(1, np.rint(model.n_center * np.exp(model.sigma_n * z))).astype(int)
        x = rng.binomial(sizes, p)
        lo = np.empty(size)
        up = np.empty(size)
        for k in np.unique(sizes):
            sel = sizes == k
            t_lo, t_up = table(int(k))
            lo[sel] = t_lo[x[sel]]
            up[sel] = t_up[x[sel]]
        hits_l += int(np.count_nonzero(lo > p))
        hits_u += int(np.count_nonzero(up < p))
        wl = x / sizes - lo
        wu = up - x / sizes
        s_wl += wl.sum()
        s_wl2 += (wl * wl).sum()
        s_wu += wu.sum()
        s_wu2 += (wu * wu).sum()
        done += size
    r_l, r_u = hits_l / draws, hits_u / draws
    m_l, m_u = s_wl / draws, s_wu / draws
    se_wl = math.sqrt(max(0.0, s_wl2 / draws - m_l * m_l) / draws)
    se_wu = math.sqrt(max(0.0, s_wu2 / draws - m_u * m_u) / draws)
    regime = "local_average" if isinstance(model, RandomProportionModel) else "random_size"
    errors = ErrorReport(r_l, r_u, regime,
                         math.sqrt(r_l * (1 - r_l) / draws), math.sqrt(r_u * (1 - r_u) / draws))
    return MonteCarloReport(errors, m_l, m_u, se_wl, se_wu, draws)
