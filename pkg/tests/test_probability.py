import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import comb
from scipy.stats import qmc

from wolbachia_release import probability as pr
from wolbachia_release.exceptions import InvalidBox, RecursionDepthExceeded

R_STAR = 10.980261488688235


def gamma_alternating(i, lam, w):
    """Chain density as the alternating sum of truncated powers."""
    n = i - 2
    total = sum((-1) ** j * comb(i - 1, j, exact=True) * max(w - j * lam, 0.0) ** n
                for j in range(i))
    return total / math.factorial(n)


def test_constants():
    assert pr.LAMBDA == pytest.approx(1.66511, abs=1e-5)
    assert pr.min_k0(pr.LAMBDA, R_STAR) == 8
    assert pr.min_k0(pr.DEGRADED_LAMBDA, R_STAR) == 17
    assert pr.gap_bound(830.0) == pytest.approx(pr.LAMBDA * math.sqrt(2 * 830.0), rel=1e-14)


def test_success_criterion_examples():
    lam = 2.0
    assert pr.success_criterion([0.0, 1.5], lam, 1.5)
    assert not pr.success_criterion([0.3], lam, 0.1)
    assert not pr.success_criterion([], lam, 0.1)
    k0 = pr.min_k0(pr.LAMBDA, R_STAR)
    assert pr.success_criterion(pr.LAMBDA * np.arange(k0 + 1), pr.LAMBDA, R_STAR)
    assert not pr.success_criterion([0.0, 3.0, 6.0], lam, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 20.0), min_size=1, max_size=15), st.floats(0.0, 20.0))
def test_success_monotone_under_insertion(points, extra):
    pts = np.sort(points)
    more = np.sort(np.append(pts, extra))
    if pr.success_criterion(pts, 1.5, 6.0):
        assert pr.success_criterion(more, 1.5, 6.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 20.0), min_size=2, max_size=15))
def test_vectorised_spans_agree(points):
    x = np.sort(points)[None, :]
    vec = bool(np.any(pr._run_spans(x, 1.5) >= 6.0))
    assert vec == pr.success_criterion(x[0], 1.5, 6.0)


def test_gamma_small_cases():
    assert pr.gamma_measure(2, 1.0, 0.0, 1.0) == 1.0
    assert pr.gamma_measure(2, 1.0, 0.0, 1.0001) == 0.0
    assert pr.gamma_measure(2, 1.0, 0.0, -1e-9) == 0.0
    assert pr.gamma_measure(3, 1.0, 0.0, 1.5) == pytest.approx(0.5, abs=1e-15)
    for i in range(3, 8):
        assert pr.gamma_measure(i, 1.3, 2.0, 2.0 + (i - 1) * 1.3 + 1e-9) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.floats(0.2, 3.0), st.floats(-5, 5), st.floats(-1.0, 1.1))
def test_gamma_matches_alternating_sum(i, lam, u, frac):
    v = u + frac * (i - 1) * lam
    w = v - u
    got = float(pr.gamma_measure(i, lam, u, v))
    if i == 2:
        assert got == float(0 <= w <= lam)
        return
    assert got == pytest.approx(gamma_alternating(i, lam, w), abs=1e-9 * lam ** (i - 2))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-5, 5), st.floats(-1.0, 7.0))
def test_gamma3_interval_intersection(lam, u, dv):
    v = u + dv
    overlap = max(0.0, min(u + lam, v) - max(u, v - lam))
    assert float(pr.gamma_measure(3, lam, u, v)) == pytest.approx(overlap, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.floats(0.3, 2.0), st.floats(0.0, 1.0))
def test_gamma_recursion(i, lam, frac):
    v = frac * (i + 1) * lam
    integral = quad(lambda t: float(pr.gamma_measure(i + 1, lam, t, v)), 0.0, lam,
                    points=[v - j * lam for j in range(i + 2) if 0 < v - j * lam < lam] or None,
                    epsabs=1e-13, epsrel=1e-12)[0]
    assert integral == pytest.approx(float(pr.gamma_measure(i + 2, lam, 0.0, v)),
                                     abs=1e-8 * lam ** i)


def test_gamma_translation_invariance():
    a = pr.gamma_measure(5, 1.1, 0.0, 2.7)
    b = pr.gamma_measure(5, 1.1, 13.25, 13.25 + 2.7)
    assert a == pytest.approx(b, abs=1e-14)


def test_beta_zero_below_span():
    for k in (8, 10):
        assert pr.beta_measure(k, pr.LAMBDA, R_STAR, R_STAR) == 0.0
        assert pr.beta_measure(k, pr.LAMBDA, R_STAR, 5.0) == 0.0
    assert pr.beta_measure(5, pr.LAMBDA, R_STAR, 20.0) == 0.0
    with pytest.raises(RecursionDepthExceeded):
        pr.beta_measure(30, pr.LAMBDA, R_STAR, 20.0)


def test_beta_ratio_bounds_and_monotone():
    s = np.linspace(11.0, 30.0, 12)
    for k in (8, 11):
        b = pr.beta_measure(k, pr.LAMBDA, R_STAR, s)
        tau = s**k / math.factorial(k)
        assert np.all(b >= 0) and np.all(b <= tau * (1 + 1e-12))
        assert np.all(np.diff(b) >= -1e-12 * b[1:])
    lo = pr.beta_measure(10, 1.6, 10.0, 18.0)
    assert pr.beta_measure(10, 1.7, 10.0, 18.0) >= lo
    assert pr.beta_measure(10, 1.6, 10.5, 18.0) <= lo


def test_beta_k0_matches_closed_form():
    c = pr.k0_constants(pr.LAMBDA, R_STAR)
    for L in (5.6, 6.0, 6.3, 7.0, 9.0):
        exact = pr.beta_measure(8, pr.LAMBDA, R_STAR, 2 * L)
        closed = pr.beta_k0_closed_form(pr.LAMBDA, R_STAR, L, constants=c)
        assert exact == pytest.approx(closed, rel=1e-4)


def test_closed_form_properties():
    lam = pr.LAMBDA
    c = pr.k0_constants(lam, R_STAR)
    top = (c.k0 - 1) * lam
    below = pr.beta_k0_closed_form(lam, R_STAR, 0.5 * top - 1e-9, constants=c)
    assert below == pytest.approx(c.f2, rel=1e-6)
    assert c.f2 <= (top - R_STAR) * c.f1
    a = pr.beta_k0_closed_form(lam, R_STAR, 0.5 * top + 1.0, constants=c)
    b = pr.beta_k0_closed_form(lam, R_STAR, 0.5 * top + 1.5, constants=c)
    assert (b - a) / 1.0 == pytest.approx(c.f1, rel=1e-12)
    assert pr.beta_k0_closed_form(lam, R_STAR, 0.4 * R_STAR, constants=c) == 0.0


def test_optimal_box():
    box = pr.optimal_box_k0(pr.LAMBDA, R_STAR)
    assert 2 * box.L_hat >= 8 / 7 * R_STAR
    assert box.lower_bound == pytest.approx(0.5 * 8 / 7 * R_STAR)
    assert box.in_affine_branch
    grid = np.linspace(5.6, 9.0, 341)
    c = pr.k0_constants(pr.LAMBDA, R_STAR)
    vals = [pr.k0_ratio(pr.LAMBDA, R_STAR, L, c) for L in grid]
    i = int(np.argmax(vals))
    from wolbachia_release._optimize import golden_section
    L_num, _ = golden_section(lambda L: -pr.k0_ratio(pr.LAMBDA, R_STAR, L, c),
                              grid[i - 1], grid[i + 1], tol=1e-9)
    assert L_num == pytest.approx(box.L_hat, abs=1e-3)
    assert box.probability == pytest.approx(max(vals), rel=1e-4)


def test_mc_zero_when_impossible():
    proto = pr.ProtocolSpec(80, 0.45 * R_STAR, pr.LAMBDA, R_STAR)
    assert proto.impossible
    est = pr.mc_success_probability(proto, 1000, 0)
    assert est.value == 0.0 and est.method == "monte_carlo"
    assert pr.exact_success_probability(pr.ProtocolSpec(5, 10.0, pr.LAMBDA, R_STAR)).value == 0.0
    with pytest.raises(InvalidBox):
        pr.ProtocolSpec(5, 0.0)


def test_mc_deterministic_across_threads():
    proto = pr.ProtocolSpec(40, 7.0, pr.LAMBDA, R_STAR)
    a = pr.mc_success_probability(proto, 70_000, 11, threads=1)
    b = pr.mc_success_probability(proto, 70_000, 11, threads=3)
    c = pr.mc_success_probability(proto, 70_000, 12, threads=1)
    assert a == b
    assert a.value != c.value


def test_small_k_mc_against_exact_and_sobol():
    lam, R, k, L = 1.0, 2.5, 5, 2.0
    proto = pr.ProtocolSpec(k, L, lam, R)
    exact = pr.exact_success_probability(proto).value
    mc = pr.mc_success_probability(proto, 200_000, 5)
    assert abs(mc.value - exact) <= 3 * mc.std_error
    pts = qmc.Sobol(k, seed=0).random_base2(16) * 2 * L - L
    pts.sort(axis=1)
    sobol = np.mean(np.any(pr._run_spans(pts, lam) >= R, axis=1))
    assert abs(mc.value - sobol) <= 3 * mc.std_error
    assert sobol == pytest.approx(exact, abs=2e-3)


def test_two_gaussian_lemma():
    sigma = 1.7
    h = math.sqrt(2 * sigma * math.log(2))
    assert pr.two_gaussian_margin(h, sigma) >= -1e-15
    assert pr.two_gaussian_margin(0.5 * h, sigma) > 0
    assert pr.two_gaussian_margin(1.01 * h, sigma) < 0


def test_cover_single_weak_release():
    est = pr.mc_cover_probability(1, 1e-4, 0.01, 5.0, 3.0, 0.7, 1.0, 1, 200, 0)
    assert est.value == 0.0


def test_cover_two_dimensional_runs():
    est = pr.mc_cover_probability(40, 5.0, 0.01, 3.0, 1.0, 0.7, 0.5, 2, 20, 0)
    assert 0.0 <= est.value <= 1.0 and est.n_samples == 20
