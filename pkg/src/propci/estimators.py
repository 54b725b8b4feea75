"""Confidence-interval estimators for a binomial proportion.

Every estimator is reached through :func:`interval`.  The nine classical
estimators and the continuity-corrected ones define a lower bound only;
their upper bound follows by equivariance, U(x, n) = 1 - L(n - x, n).
The bootstrap-based estimators compute both bounds from the exactly
enumerated resampling law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numerics as nm
from ._backend import kernels

CORE_METHODS = (
    "wald",
    "wilson_modified",
    "arcsine_bartlett",
    "wald_logit_modified",
    "likelihood_ratio_modified",
    "jeffreys_modified",
    "blaker",
    "clopper_pearson",
    "clopper_pearson_midp",
)
CC_METHODS = ("wald_cc", "wilson_cc")
BOOTSTRAP_METHODS = ("boot_percentile", "boot_basic")
METHODS = CORE_METHODS + ("wilson",) + CC_METHODS + BOOTSTRAP_METHODS + ("composite_dellas",)

# methods whose upper bound is obtained by reflecting the lower bound
_REFLECTED = frozenset(CORE_METHODS + ("wilson",) + CC_METHODS)

# report raw (unclamped) bounds by default for these; negative values are informative
RAW_BY_DEFAULT = frozenset({"wald", "boot_basic"})

BLAKER_SCAN_POINTS = 256


@dataclass(frozen=True)
class BinomialSample:
    x: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise nm.DomainError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.x <= self.n:
            raise nm.DomainError(f"need 0 <= x <= n, got x={self.x}, n={self.n}")

    @property
    def p_hat(self) -> float:
        return self.x / self.n

    def reflected(self) -> "BinomialSample":
        return BinomialSample(self.n - self.x, self.n)


@dataclass(frozen=True)
class ConfidenceSpec:
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise nm.DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def kappa(self) -> float:
        return nm.normal_quantile(1.0 - 0.5 * self.alpha)


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


@dataclass(frozen=True)
class Interval:
    point: float
    lower_raw: float
    upper_raw: float
    method: str = ""

    @property
    def lower(self) -> float:
        return _clamp(self.lower_raw)

    @property
    def upper(self) -> float:
        return _clamp(self.upper_raw)

    def bounds(self, raw: bool = False) -> tuple[float, float]:
        return (self.lower_raw, self.upper_raw) if raw else (self.lower, self.upper)

    def contains(self, other: "Interval") -> bool:
        return self.lower <= other.lower and other.upper <= self.upper


def wilson_xstar(n: int) -> int:
    return 2 if n <= 50 else 3


@dataclass(frozen=True)
class MethodSpec:
    """An estimator id plus its configurable options.

    ``wilson_small_x_level`` selects the chi-square quantile level of the
    modified Wilson small-count branch: ``"alpha"`` (as tabulated) or
    ``"half_alpha"``.
    """

    id: str
    wilson_small_x_level: str = "alpha"

    def __post_init__(self):
        if self.id not in METHODS:
            raise ValueError(f"unknown method {self.id!r}; choose from {', '.join(METHODS)}")
        if self.wilson_small_x_level not in ("alpha", "half_alpha"):
            raise ValueError("wilson_small_x_level must be 'alpha' or 'half_alpha'")

    xstar = staticmethod(wilson_xstar)


def as_method(method) -> MethodSpec:
    if isinstance(method, MethodSpec):
        return method
    return MethodSpec(str(method))


@dataclass(frozen=True)
class MethodProperties:
    equivariant: bool
    analytic_solution: bool
    monotone_in_x: bool
    generalizes_multivariate: bool
    deterministic: bool = True


_PROPS = {
    "wald": MethodProperties(True, True, False, True),
    "wilson_modified": MethodProperties(True, True, True, False),
    "arcsine_bartlett": MethodProperties(True, True, True, False),
    "wald_logit_modified": MethodProperties(True, True, True, True),
    "likelihood_ratio_modified": MethodProperties(True, False, True, True),
    "jeffreys_modified": MethodProperties(True, True, False, False),
    "blaker": MethodProperties(True, False, False, False),
    "clopper_pearson": MethodProperties(True, True, True, True),
    "clopper_pearson_midp": MethodProperties(True, False, True, True),
    "wilson": MethodProperties(True, True, True, False),
    "wald_cc": MethodProperties(True, True, False, False),
    "wilson_cc": MethodProperties(True, True, True, False),
    "boot_percentile": MethodProperties(True, False, False, False),
    "boot_basic": MethodProperties(True, False, False, False),
    "composite_dellas": MethodProperties(True, False, False, False),
}


def method_properties(method) -> MethodProperties:
    return _PROPS[as_method(method).id]


# ---------------------------------------------------------------- lower bounds

def _wilson_lower(x: float, n: int, kappa: float) -> float:
    k2 = kappa * kappa
    return (x + 0.5 * k2 - kappa * math.sqrt(x * (n - x) / n + 0.25 * k2)) / (n + k2)


def _clopper_pearson_lower(x, n, alpha):
    if x == 0:
        return 0.0
    return kernels.betaincinv(float(x), float(n - x + 1), 0.5 * alpha)


def _exact_top(n, alpha):
    # Clopper-Pearson lower bound at x = n, used by the modified estimators
    return (0.5 * alpha) ** (1.0 / n)


def _lower(spec: MethodSpec, x: int, n: int, conf: ConfidenceSpec) -> float:
    m = spec.id
    alpha = conf.alpha
    if m == "clopper_pearson":
        return _clopper_pearson_lower(x, n, alpha)
    if m == "clopper_pearson_midp":
        return kernels.midp_lower(x, n, alpha)
    if m == "blaker":
        return kernels.blaker_lower(x, n, alpha, BLAKER_SCAN_POINTS)
    kappa = conf.kappa
    if m == "wald":
        return x / n - kappa * math.sqrt(x * (n - x) / n ** 3)
    if m == "wald_cc":
        p = x / n
        return p - kappa * math.sqrt(p * (1.0 - p) / n) - 0.5 / n
    if m == "wilson":
        return _wilson_lower(x, n, kappa)
    if m == "wilson_cc":
        return 0.0 if x == 0 else _wilson_lower(x - 0.5, n, kappa)
    if m == "wilson_modified":
        if 1 <= x <= wilson_xstar(n):
            level = alpha if spec.wilson_small_x_level == "alpha" else 0.5 * alpha
            return nm.chi_square_quantile(level, 2 * x) / (2 * n)
        return _wilson_lower(x, n, kappa)
    if m == "arcsine_bartlett":
        angle = math.asin(math.sqrt((x + 0.5) / (n + 1))) - kappa / (2.0 * math.sqrt(n + 0.5))
        return math.sin(max(0.0, angle)) ** 2
    if x == 0:
        return 0.0
    if x == n:
        return _exact_top(n, alpha)
    if m == "wald_logit_modified":
        t = math.log(x / (n - x)) - kappa * math.sqrt(n / (x * (n - x)))
        return float(nm.invlogit(t))
    if m == "likelihood_ratio_modified":
        return kernels.lr_lower(x, n, 0.5 * kappa * kappa)
    if m == "jeffreys_modified":
        if x <= 1:
            return 0.0
        return kernels.betaincinv(x + 0.5, n - x + 0.5, 0.5 * alpha)
    raise ValueError(f"{m} has no lower-bound formula")


def lower_bound(method, sample: BinomialSample, conf: ConfidenceSpec) -> float:
    """Raw (unclamped) lower bound of the interval for ``sample``."""
    spec = as_method(method)
    if spec.id in _REFLECTED:
        return _lower(spec, sample.x, sample.n, conf)
    return interval(spec, sample, conf).lower_raw


# ---------------------------------------------------------------- bootstrap

def bootstrap_distribution(sample: BinomialSample) -> np.ndarray:
    """pmf of the resampled success count X* ~ Binomial(n, x/n), over 0..n."""
    return nm.binomial_pmf(sample.n, sample.p_hat)


def _bootstrap_quantile_index(pmf_rows: np.ndarray, level: float) -> np.ndarray:
    # smallest k with Pr(X* <= k) >= level
    cdf = np.cumsum(pmf_rows, axis=1)
    hit = cdf >= level
    idx = np.argmax(hit, axis=1)
    idx[~hit.any(axis=1)] = pmf_rows.shape[1] - 1
    return idx


def _bootstrap_bounds(kind: str, n: int, xs, alpha: float):
    xs = np.asarray(xs, dtype=int)
    pmf = nm.binomial_pmf_matrix(n, xs / n)
    q_lo = _bootstrap_quantile_index(pmf, 0.5 * alpha) / n
    q_hi = _bootstrap_quantile_index(pmf, 1.0 - 0.5 * alpha) / n
    if kind == "percentile":
        return q_lo, q_hi
    p = xs / n
    return 2.0 * p - q_hi, 2.0 * p - q_lo


def bootstrap_interval(kind: str, sample: BinomialSample, conf: ConfidenceSpec) -> Interval:
    if kind not in ("percentile", "basic"):
        raise ValueError(f"bootstrap kind must be 'percentile' or 'basic', got {kind!r}")
    lo, hi = _bootstrap_bounds(kind, sample.n, [sample.x], conf.alpha)
    return Interval(sample.p_hat, float(lo[0]), float(hi[0]), f"boot_{kind}")


def composite_dellas_interval(sample: BinomialSample, conf: ConfidenceSpec) -> Interval:
    """Percentile bootstrap, with Clopper-Pearson where the bootstrap law degenerates."""
    if sample.x in (0, sample.n):
        ci = interval("clopper_pearson", sample, conf)
    else:
        ci = bootstrap_interval("percentile", sample, conf)
    return Interval(ci.point, ci.lower_raw, ci.upper_raw, "composite_dellas")


def continuity_corrected_interval(kind: str, sample: BinomialSample,
                                  conf: ConfidenceSpec) -> Interval:
    if kind not in CC_METHODS:
        raise ValueError(f"kind must be one of {CC_METHODS}, got {kind!r}")
    return interval(kind, sample, conf)


# ---------------------------------------------------------------- public API

def interval(method, sample: BinomialSample, conf: ConfidenceSpec | None = None) -> Interval:
    conf = conf or ConfidenceSpec()
    spec = as_method(method)
    if spec.id in _REFLECTED:
        lo = _lower(spec, sample.x, sample.n, conf)
        up = 1.0 - _lower(spec, sample.n - sample.x, sample.n, conf)
        return Interval(sample.p_hat, lo, up, spec.id)
    if spec.id == "composite_dellas":
        return composite_dellas_interval(sample, conf)
    return bootstrap_interval(spec.id[len("boot_"):], sample, conf)


def blaker_pvalue(p: float, sample: BinomialSample) -> float:
    """Blaker's two-sided acceptability of the proportion ``p`` given ``sample``."""
    if not 0.0 <= p <= 1.0:
        raise nm.DomainError(f"p must lie in [0, 1], got {p}")
    x, n = sample.x, sample.n
    if p < x / n:
        return kernels.blaker_pvalue_low(p, x, n)
    return kernels.blaker_pvalue_low(1.0 - p, n - x, n)


@dataclass(frozen=True)
class BoundTable:
    """Raw bounds for every x = 0..n of one (method, n, alpha) cell."""

    n: int
    lower_raw: np.ndarray
    upper_raw: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return np.clip(self.lower_raw, 0.0, 1.0)

    @property
    def upper(self) -> np.ndarray:
        return np.clip(self.upper_raw, 0.0, 1.0)


@lru_cache(maxsize=2048)
def _bound_table(spec: MethodSpec, n: int, alpha: float) -> BoundTable:
    conf = ConfidenceSpec(alpha)
    xs = np.arange(n + 1)
    if spec.id in _REFLECTED:
        lower = np.array([_lower(spec, int(x), n, conf) for x in xs])
        upper = 1.0 - lower[::-1]
    elif spec.id == "composite_dellas":
        lower, upper = _bootstrap_bounds("percentile", n, xs, alpha)
        cp = _bound_table(MethodSpec("clopper_pearson"), n, alpha)
        for x in (0, n):
            lower[x], upper[x] = cp.lower_raw[x], cp.upper_raw[x]
    else:
        lower, upper = _bootstrap_bounds(spec.id[len("boot_"):], n, xs, alpha)
    lower = np.ascontiguousarray(lower, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    lower.flags.writeable = False
    upper.flags.writeable = False
    return BoundTable(n, lower, upper)


def bound_table(method, n: int, conf: ConfidenceSpec | None = None) -> BoundTable:
    """Cached bound table; computed once per (method, n, alpha), then read-only."""
    conf = conf or ConfidenceSpec()
    return _bound_table(as_method(method), int(n), float(conf.alpha))
