import math

import numpy as np
import pytest

from propci import numerics as nm
from propci import evaluation as ev
from propci.estimators import METHODS, ConfidenceSpec, bound_table

CONF = ConfidenceSpec(0.05)


def full_coverage(n, conf):
    return np.zeros(n + 1), np.ones(n + 1)


# ------------------------------------------------------------ models

def test_random_proportion_model_fields():
    m = ev.RandomProportionModel(0.1, 1.2)
    assert m.sigma == math.log(1.2)
    assert m.expected_successes(64) == pytest.approx(6.4)
    with pytest.raises(nm.DomainError):
        ev.RandomProportionModel(0.0, 1.2)
    with pytest.raises(nm.DomainError):
        ev.RandomProportionModel(0.1, 0.9)


@pytest.mark.parametrize("p0", [2.4e-5, 0.001, 0.0218, 0.1, 0.5, 0.93])
@pytest.mark.parametrize("or_s", [1.05, 1.2, 3.0])
def test_calibration_solves_mean(p0, or_s):
    sigma = math.log(or_s)
    mu = ev.calibrate_mu(p0, sigma)
    # independent check with a denser rule on a wider range
    z, w = np.polynomial.legendre.leggauss(400)
    z, w = 12 * z, 12 * w * np.exp(-0.5 * (12 * z) ** 2) / math.sqrt(2 * math.pi)
    assert np.dot(w, nm.invlogit(mu + sigma * z)) == pytest.approx(p0, abs=1e-10)


def test_calibration_trivial_cases():
    assert ev.calibrate_mu(0.5, 0.7) == pytest.approx(0.0, abs=1e-12)
    assert ev.calibrate_mu(0.2, 0.0) == pytest.approx(math.log(0.25), abs=1e-15)


def test_calibration_monte_carlo():
    sigma = math.log(1.2)
    mu = ev.calibrate_mu(0.1, sigma)
    assert mu < math.log(0.1 / 0.9)
    rng = np.random.default_rng(7)
    draws = nm.invlogit(mu + sigma * rng.standard_normal(10_000_000))
    assert abs(draws.mean() - 0.1) < 3 * draws.std() / math.sqrt(draws.size)


def test_size_distribution():
    sizes, probs = ev.RandomSampleSizeModel(64, 0.1).size_distribution()
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)
    assert sizes.min() >= 1
    assert np.dot(sizes, probs) == pytest.approx(64 * math.exp(0.5 * math.log(1.2) ** 2), rel=2e-3)
    sizes, probs = ev.RandomSampleSizeModel(3, 0.1, 2.0).size_distribution()
    assert sizes[0] == 1
    sizes, probs = ev.RandomSampleSizeModel(64, 0.1, 0.0).size_distribution()
    assert list(sizes) == [64] and list(probs) == [1.0]


def test_grid_points_respect_proportion_range():
    g = ev.EvaluationGrid()
    assert len(g.lambda_values) == 400
    assert g.sample_sizes == (32, 64, 2048)
    pts = g.points()
    assert all(lam / n < 1 for n, lam in pts)
    assert len([p for p in pts if p[0] == 32]) == sum(lam < 32 for lam in g.lambda_values)
    assert len([p for p in pts if p[0] == 2048]) == 400
    small = ev.EvaluationGrid((2,), (0.5, 1.5, 2.0, 5.0))
    assert small.points() == [(2, 0.5), (2, 1.5)]


# ------------------------------------------------------------ conditional

def _brute_conditional(method, n, p):
    t = bound_table(method, n)
    a_l = a_u = cover = 0.0
    for x in range(n + 1):
        pr = math.comb(n, x) * p ** x * (1 - p) ** (n - x)
        if t.lower[x] > p:
            a_l += pr
        elif t.upper[x] < p:
            a_u += pr
        else:
            cover += pr
    return a_l, a_u, cover


def test_conditional_matches_enumeration():
    rng = np.random.default_rng(2)
    for method in METHODS:
        for _ in range(6):
            n = int(rng.integers(1, 101))
            p = float(rng.uniform(0.001, 0.999))
            r = ev.conditional_errors(method, n, p)
            a_l, a_u, cover = _brute_conditional(method, n, p)
            assert abs(r.alpha_l - a_l) <= 1e-12 and abs(r.alpha_u - a_u) <= 1e-12
            assert r.alpha_l + r.alpha_u + cover == pytest.approx(1.0, abs=1e-12)


def test_conditional_clopper_pearson_n10():
    a_l, a_u, _ = _brute_conditional("clopper_pearson", 10, 0.2)
    r = ev.conditional_errors("clopper_pearson", 10, 0.2)
    assert (r.alpha_l, r.alpha_u) == pytest.approx((a_l, a_u), abs=1e-15)


def test_conditional_tie_counts_as_coverage():
    n, x = 20, 5
    p = bound_table("clopper_pearson", n).lower[x]
    a_l, _, _ = _brute_conditional("clopper_pearson", n, p)
    assert ev.conditional_errors("clopper_pearson", n, p).alpha_l == pytest.approx(a_l, abs=1e-15)


def test_conditional_degenerate_and_domain():
    r = ev.conditional_errors(full_coverage, 30, 0.3)
    assert (r.alpha_l, r.alpha_u) == (0.0, 0.0)
    with pytest.raises(nm.DomainError):
        ev.conditional_errors("wald", 30, 1.0)


def test_clopper_pearson_never_exceeds_half_alpha():
    ps = np.linspace(0, 1, 2002)[1:-1]
    for n in (32, 64, 2048):
        a_l, a_u = ev.conditional_error_arrays("clopper_pearson", n, ps)
        assert a_l.max() <= 0.025 and a_u.max() <= 0.025


# ------------------------------------------------------------ local average

def test_local_average_degenerate():
    r = ev.local_average_errors(full_coverage, 64, ev.RandomProportionModel(0.05))
    assert (r.alpha_l, r.alpha_u) == (0.0, 0.0)


def test_local_average_sigma_zero_is_conditional():
    m = ev.RandomProportionModel(0.07, 1.0)
    r = ev.local_average_errors("wilson", 50, m)
    c = ev.conditional_errors("wilson", 50, 0.07)
    assert (r.alpha_l, r.alpha_u) == pytest.approx((c.alpha_l, c.alpha_u), abs=1e-15)


def test_local_average_node_convergence():
    for method, n, lam in (("wald_logit_modified", 2048, 0.11), ("wald", 64, 4.0),
                           ("blaker", 2048, 30.0), ("clopper_pearson_midp", 32, 0.3)):
        m = ev.RandomProportionModel(lam / n, 1.2)
        a = ev.local_average_errors(method, n, m, m=64)
        b = ev.local_average_errors(method, n, m, m=256)
        assert abs(a.alpha_l - b.alpha_l) < 1e-9 and abs(a.alpha_u - b.alpha_u) < 1e-9


def test_local_average_matches_direct_integration_of_conditional_curve():
    # integrate the step function alpha'(p) against the mixing density on a fine grid
    n, lam = 32, 3.0
    model = ev.RandomProportionModel(lam / n, 1.2)
    t = np.linspace(model.mu - 8 * model.sigma, model.mu + 8 * model.sigma, 400_001)
    dens = np.exp(-0.5 * ((t - model.mu) / model.sigma) ** 2) / (model.sigma * math.sqrt(2 * math.pi))
    a_l, a_u = ev.conditional_error_arrays("clopper_pearson_midp", n, nm.invlogit(t))
    dt = t[1] - t[0]
    r = ev.local_average_errors("clopper_pearson_midp", n, model)
    assert np.sum(a_l * dens) * dt == pytest.approx(r.alpha_l, abs=2e-6)
    assert np.sum(a_u * dens) * dt == pytest.approx(r.alpha_u, abs=2e-6)


def test_mixed_outcome_distribution_normalized():
    for n in (32, 2048):
        q = ev.mixed_outcome_distribution(n, ev.RandomProportionModel(3 / n, 1.2))
        assert q.sum() == pytest.approx(1.0, abs=1e-12)


def test_pmf_support_bounds():
    t_lo, t_hi = ev.pmf_logit_support(64)
    for x in (0, 1, 30, 63, 64):
        for t in (t_lo[x], t_hi[x]):
            if np.isfinite(t):
                assert nm.log_binomial_pmf(x, 64, float(nm.invlogit(t))) <= -ev.SUPPORT_DEPTH + 1e-6


# ------------------------------------------------------------ half-widths

def test_half_widths_self_reference():
    m = ev.RandomProportionModel(4 / 32, 1.2)
    hw = ev.local_average_half_widths("clopper_pearson_midp", 32, m, reference="clopper_pearson_midp")
    assert hw.ratio_l == 1.0 and hw.ratio_u == 1.0
    assert hw.relative_to == "clopper_pearson_midp"


def test_half_widths_containment_ratio():
    for n in (32, 64, 2048):
        for lam in (0.1, 1.0, 8.0, 30.0):
            m = ev.RandomProportionModel(lam / n, 1.2)
            hw = ev.local_average_half_widths("clopper_pearson", n, m, reference="clopper_pearson_midp")
            assert hw.ratio_l >= 1.0 and hw.ratio_u >= 1.0
            assert hw.w_l >= 0 and hw.w_u >= 0


# ------------------------------------------------------------ Monte-Carlo oracle

MC_CASES = [
    ("clopper_pearson_midp", 64, 4.0), ("clopper_pearson_midp", 32, 4.0), ("wald", 64, 4.0),
    ("wald_logit_modified", 2048, 0.11), ("blaker", 225, 5.0), ("wilson_modified", 32, 1.0),
    ("likelihood_ratio_modified", 2048, 32.0), ("jeffreys_modified", 64, 12.0),
    ("boot_basic", 225, 2.0), ("composite_dellas", 225, 4.905),
]


@pytest.mark.parametrize("method,n,lam", MC_CASES)
def test_quadrature_vs_monte_carlo(method, n, lam):
    model = ev.RandomProportionModel(lam / n, 1.2)
    mc = ev.monte_carlo_oracle(method, model, n=n, draws=10_000_000, seed=1000 + n)
    r = ev.local_average_errors(method, n, model)
    hw = ev.local_average_half_widths(method, n, model)
    e = mc.errors
    assert abs(e.alpha_l - r.alpha_l) <= 3 * e.se_l + 1e-12
    assert abs(e.alpha_u - r.alpha_u) <= 3 * e.se_u + 1e-12
    assert abs(mc.w_l - hw.w_l) <= 3 * mc.se_w_l + 1e-12
    assert abs(mc.w_u - hw.w_u) <= 3 * mc.se_w_u + 1e-12


def test_monte_carlo_sigma_zero_matches_conditional():
    model = ev.RandomProportionModel(0.1, 1.0)
    mc = ev.monte_carlo_oracle("wald", model, n=40, draws=1_000_000, seed=3)
    c = ev.conditional_errors("wald", 40, 0.1)
    assert abs(mc.errors.alpha_l - c.alpha_l) <= 3 * mc.errors.se_l + 1e-12
    assert abs(mc.errors.alpha_u - c.alpha_u) <= 3 * mc.errors.se_u


def test_monte_carlo_random_size_and_degenerate():
    model = ev.RandomSampleSizeModel(64, 4 / 64)
    mc = ev.monte_carlo_oracle("clopper_pearson_midp", model, draws=2_000_000, seed=9)
    r = ev.random_size_errors("clopper_pearson_midp", model)
    assert abs(mc.errors.alpha_l - r.alpha_l) <= 3 * mc.errors.se_l
    assert abs(mc.errors.alpha_u - r.alpha_u) <= 3 * mc.errors.se_u
    mc = ev.monte_carlo_oracle(full_coverage, ev.RandomProportionModel(0.2), n=10, draws=100_000, seed=1)
    assert (mc.errors.alpha_l, mc.errors.alpha_u) == (0.0, 0.0)
    with pytest.raises(nm.DomainError):
        ev.monte_carlo_oracle("wald", model, draws=10, seed=1)


def test_monte_carlo_is_seeded():
    model = ev.RandomProportionModel(0.05)
    a = ev.monte_carlo_oracle("wald", model, n=50, draws=200_000, seed=4)
    b = ev.monte_carlo_oracle("wald", model, n=50, draws=200_000, seed=4)
    assert a == b


# ------------------------------------------------------------ random size

def test_random_size_degenerate_cases():
    m = ev.RandomSampleSizeModel(64, 0.08, 0.0)
    r = ev.random_size_errors("wilson", m)
    c = ev.conditional_errors("wilson", 64, 0.08)
    assert (r.alpha_l, r.alpha_u) == (c.alpha_l, c.alpha_u)
    r = ev.random_size_errors(full_coverage, ev.RandomSampleSizeModel(64, 0.08))
    assert (r.alpha_l, r.alpha_u) == (0.0, 0.0)


def test_random_size_close_to_local_average():
    g = ev.EvaluationGrid((64,))
    la = ev.error_curve("clopper_pearson_midp", g, "local_average")
    rs = ev.error_curve("clopper_pearson_midp", g, "random_size")
    for a, b in zip(la, rs):
        assert abs(a.errors.alpha_l - b.errors.alpha_l) <= 0.005
        assert abs(a.errors.alpha_u - b.errors.alpha_u) <= 0.005


# ------------------------------------------------------------ curves and scans

def test_error_curve_single_point_and_order():
    g = ev.EvaluationGrid((64,), (4.0,))
    (pt,) = ev.error_curve("wald", g, "local_average")
    assert pt.errors == ev.local_average_errors("wald", 64, ev.RandomProportionModel(4 / 64))
    (pt,) = ev.error_curve("wald", g, "conditional")
    assert pt.errors.alpha_l == pytest.approx(ev.conditional_errors("wald", 64, 4 / 64).alpha_l, abs=1e-15)
    g = ev.EvaluationGrid((64, 32), (3.0, 0.5, 1.0))
    pts = ev.error_curve("wald", g)
    assert [(p.n, p.lam) for p in pts] == [(64, 0.5), (64, 1.0), (64, 3.0), (32, 0.5), (32, 1.0), (32, 3.0)]
    with pytest.raises(ValueError):
        ev.error_curve("wald", g, "bayes")


def test_error_curve_thread_independent():
    g = ev.EvaluationGrid((32, 2048), tuple(np.geomspace(0.05, 20, 30)))
    a = ev.error_curve("blaker", g, "local_average", widths=True, reference="clopper_pearson", threads=1)
    b = ev.error_curve("blaker", g, "local_average", widths=True, reference="clopper_pearson", threads=4)
    assert a == b


def test_wald_tends_to_one_at_small_lambda():
    pts = ev.error_curve("wald", ev.EvaluationGrid((2048,)), "local_average")
    assert pts[0].lam == pytest.approx(0.05) and pts[0].errors.alpha_u > 0.9


def test_wald_bias_larger_for_larger_n():
    g = ev.EvaluationGrid((64, 2048), (1.0,))
    small, large = ev.error_curve("wald", g, "local_average")
    assert abs(large.errors.two_sided - 0.05) > abs(small.errors.two_sided - 0.05)


def test_max_error_scan():
    g = ev.EvaluationGrid((32, 64), tuple(np.geomspace(0.05, 20, 200)))
    assert ev.max_error_scan("clopper_pearson", g, "conditional").max_error <= 0.025
    assert ev.max_error_scan(full_coverage, g, "conditional").max_error == 0.0
    res = ev.max_error_scan("wald", g, "local_average")
    assert res.side == "upper" and res.n == 64 and res.lam == pytest.approx(0.05)


def test_smoothing_total_variation():
    g = ev.EvaluationGrid((2048,))
    for method in METHODS:
        la = ev.error_curve(method, g, "local_average")
        co = ev.error_curve(method, g, "conditional")
        for side in ("alpha_l", "alpha_u"):
            tv_la = np.abs(np.diff([getattr(p.errors, side) for p in la])).sum()
            tv_co = np.abs(np.diff([getattr(p.errors, side) for p in co])).sum()
            assert tv_la < tv_co, (method, side)


def test_conservatism_ordering():
    g = ev.EvaluationGrid((32, 64, 2048), tuple(np.geomspace(0.05, 100, 60)))
    cp = ev.error_curve("clopper_pearson", g, widths=True)
    mid = ev.error_curve("clopper_pearson_midp", g, widths=True)
    for a, b in zip(cp, mid):
        assert a.errors.alpha_l <= b.errors.alpha_l + 1e-15
        assert a.errors.alpha_u <= b.errors.alpha_u + 1e-15
        assert a.widths.w_l >= b.widths.w_l and a.widths.w_u >= b.widths.w_u


def test_bootstrap_bias_ordering_at_lambda_4():
    m = ev.RandomProportionModel(4 / 2048, 1.2)
    basic, wald, pct = (ev.local_average_errors(k, 2048, m).two_sided
                        for k in ("boot_basic", "wald", "boot_percentile"))
    assert basic >= wald >= pct


def test_mirroring_of_equivariant_methods():
    # errors at p0 and 1 - p0 swap sides for equivariant intervals
    for method in ("wilson_modified", "blaker"):
        a = ev.local_average_errors(method, 64, ev.RandomProportionModel(0.1))
        b = ev.local_average_errors(method, 64, ev.RandomProportionModel(0.9))
        assert a.alpha_l == pytest.approx(b.alpha_u, abs=1e-9)
        assert a.alpha_u == pytest.approx(b.alpha_l, abs=1e-9)


# ------------------------------------------------------------ validity rule

def test_validity_rule():
    assert ev.wald_validity_check(40).passed
    rep = ev.wald_validity_check(5)
    assert not rep.passed and rep.max_error > 0.0375
    assert rep.limit == pytest.approx(0.0375)


def test_validity_degenerate_and_empty():
    rep = ev.wald_validity_check(40, method=full_coverage)
    assert rep.max_error == 0.0
    with pytest.raises(ev.EmptyRegionError):
        ev.wald_validity_check(500, grid=ev.EvaluationGrid((64,), (1.0, 10.0)))
    with pytest.raises(nm.DomainError):
        ev.wald_validity_check(-1)


def test_error_report_fields():
    r = ev.ErrorReport(0.01, 0.02)
    assert r.two_sided == pytest.approx(0.03) and r.max_one_sided == 0.02
