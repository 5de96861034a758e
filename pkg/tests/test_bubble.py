import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from wolbachia_release import bubble
from wolbachia_release.exceptions import DivergentIntegral, DomainError, GridTooCoarse
from wolbachia_release.reaction import build_reaction

DEFAULT = build_reaction()


def shoot_radius(curve, alpha, sigma):
    """First zero of sigma u'' + f(u) = 0 with u(0) = alpha, u'(0) = 0."""
    def rhs(_, y):
        return [y[1], -float(curve.f(y[0])) / sigma]

    def hit(_, y):
        return y[0]

    hit.terminal = True
    hit.direction = -1
    sol = solve_ivp(rhs, (0.0, 1e3), [alpha, 0.0], method="DOP853", events=hit,
                    rtol=1e-12, atol=1e-14)
    return sol.t_events[0][0]


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_radius_matches_shooting(cubic, alpha):
    sigma = 0.7
    L = bubble.bubble_radius_1d(cubic, alpha, sigma)
    assert L == pytest.approx(shoot_radius(cubic, alpha, sigma), abs=1e-4)


def test_radius_scales_with_sqrt_sigma(curve):
    r1 = bubble.bubble_radius_1d(curve, 0.7, 1.0)
    r2 = bubble.bubble_radius_1d(curve, 0.7, 2.0)
    assert r2 / r1 == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_chi_endpoints(curve):
    assert bubble.chi(curve, 0.7, 0.7, 1.0) == 0.0
    assert bubble.chi(curve, 0.7, 0.0, 830.0) == bubble.bubble_radius_1d(curve, 0.7, 830.0)
    with pytest.raises(DivergentIntegral):
        bubble.chi(curve, curve.theta_c, 0.0, 1.0)
    with pytest.raises(DomainError):
        bubble.chi(curve, 0.7, 0.8, 1.0)


def test_radius_diverges_at_theta_c(curve):
    gaps = [1e-2, 1e-4, 1e-6, 1e-8]
    radii = [bubble.radius_integral(curve, curve.theta_c + g) for g in gaps]
    assert all(b > a for a, b in zip(radii, radii[1:]))
    assert radii[-1] > 2 * radii[0]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_chi_decreasing_in_omega(a, b):
    alpha = 0.7
    lo, hi = sorted((a * alpha, b * alpha))
    if hi - lo < 1e-9:
        return
    assert bubble.chi(DEFAULT, alpha, lo, 1.0) > bubble.chi(DEFAULT, alpha, hi, 1.0)


def test_profile_shape(curve):
    prof = bubble.bubble_profile(curve, 0.7, 830.0, n_samples=257)
    assert prof.frequency[0] == 0.7 and prof.radius[0] == 0.0
    assert prof.frequency[-1] <= 1e-8
    assert np.all(np.diff(prof.frequency) < 0)
    assert np.all(np.diff(prof.radius) > 0)
    assert prof.support_radius == pytest.approx(
        bubble.bubble_radius_1d(curve, 0.7, 830.0), rel=1e-10)
    assert prof(0.0) == 0.7 and prof(2 * prof.support_radius) == 0.0


@pytest.mark.parametrize("alpha", [0.5, 0.7, 0.95])
def test_profile_first_integral(curve, alpha):
    sigma = 2.0
    prof = bubble.bubble_profile(curve, alpha, sigma, n_samples=2049)
    r, u = prof.radius, prof.frequency
    # centred differences on the non-uniform radius grid
    du = (u[2:] - u[:-2]) / (r[2:] - r[:-2])
    lhs = 0.5 * sigma * du**2
    rhs = curve.drop(np.full(u.size - 2, alpha), alpha - u[1:-1])
    inner = slice(8, -8)
    assert np.max(np.abs(lhs[inner] - rhs[inner]) / rhs[inner]) < 1e-4


def test_ground_state(curve):
    sigma = 1.0
    assert bubble.ground_state(curve, sigma, 0.0) == curve.theta_c
    x = np.array([0.5, 5.0, 20.0, 60.0])
    vals = bubble.ground_state(curve, sigma, x)
    assert np.all(vals < curve.theta_c) and np.all(np.diff(vals) < 0)
    rate = math.sqrt(-float(curve.f_prime(0.0)) / sigma)
    far = bubble.ground_state(curve, sigma, np.array([80.0, 81.0]))
    assert math.log(far[0] / far[1]) == pytest.approx(rate, rel=1e-2)
    assert bubble.ground_state(curve, sigma, -5.0) == bubble.ground_state(curve, sigma, 5.0)


def test_energy_trivial_cases(curve):
    assert bubble.energy(np.zeros(50), 0.1, curve, 1.0) == 0.0
    ell, n = 10.0, 101
    e = bubble.energy(np.ones(n), ell / (n - 1), curve, 1.0)
    assert e == pytest.approx(-ell * curve.F_plus, rel=1e-12)
    with pytest.raises(GridTooCoarse):
        bubble.energy(np.zeros(2), 0.1, curve, 1.0)


def test_energy_of_sampled_bubble(curve):
    sigma, alpha = 1.0, 0.7
    prof = bubble.bubble_profile(curve, alpha, sigma, n_samples=4097)
    L = prof.support_radius
    x = np.linspace(-1.2 * L, 1.2 * L, 10_001)
    e = bubble.energy(prof(x), x[1] - x[0], curve, sigma)
    ref = bubble.bubble_energy_1d(curve, alpha, sigma)
    assert e == pytest.approx(ref, rel=1e-3)


def test_bubble_energy_limits_and_sign_change(curve):
    sigma = 1.0
    tc = curve.theta_c
    ref = 2 * math.sqrt(sigma) * quad(lambda v: math.sqrt(max(-2 * float(curve.F(v)), 0.0)),
                                      0.0, tc, epsrel=1e-12)[0]
    assert bubble.bubble_energy_1d(curve, tc, sigma) == pytest.approx(ref, rel=1e-8)
    assert ref > 0
    assert bubble.bubble_energy_1d(curve, curve.theta_plus, sigma) < 0
    assert bubble.bubble_energy_1d(curve, 0.999, sigma) < 0
    root = brentq(lambda a: bubble.bubble_energy_1d(curve, a, sigma), tc + 1e-6, 0.999)
    grid = np.linspace(tc + 1e-3, 0.999, 60)
    signs = np.sign([bubble.bubble_energy_1d(curve, a, sigma) for a in grid])
    assert np.count_nonzero(np.diff(signs)) == 1
    assert tc < root < 1


@pytest.mark.parametrize("alpha", [0.45, 0.7, 0.9])
def test_energy_radius_closed_form(curve, alpha):
    est = bubble.energy_radius(curve, alpha, 3.0, 1)
    radius, rho = bubble.energy_radius_1d_closed_form(curve, alpha, 3.0)
    assert est.radius == pytest.approx(radius, rel=1e-6)
    assert est.rho_opt == pytest.approx(rho, abs=1e-6)
    assert est.feasible and 0 < est.rho_opt < 1


def test_energy_radius_profile_energy(curve):
    # the plateau-ramp profile has zero energy at radius / sqrt(2)
    sigma, alpha = 1.0, 0.7
    est = bubble.energy_radius(curve, alpha, sigma, 1)
    R = est.radius / math.sqrt(2.0)
    x = np.linspace(-1.5 * R, 1.5 * R, 200_001)
    ramp = np.clip((R - np.abs(x)) / (R * (1 - est.rho_opt)), 0.0, 1.0)
    e = bubble.energy(alpha * ramp, x[1] - x[0], curve, sigma)
    assert abs(e) < 1e-3


def test_energy_radius_higher_dimension(curve):
    for d in (2, 3):
        est = bubble.energy_radius(curve, 0.7, 1.0, d)
        assert est.feasible and est.radius > 0 and 0 < est.rho_opt < 1
        assert bubble._energy_denominator(curve, 0.7, np.array(est.rho_opt), d) > 0


def test_V_derivative(curve):
    for alpha in (0.5, 0.8):
        h = 1e-5
        dV = (bubble.plateau_moments(curve, alpha + h)[1]
              - bubble.plateau_moments(curve, alpha - h)[1]) / (2 * h)
        U = bubble.plateau_moments(curve, alpha)[0]
        assert dV == pytest.approx(U / alpha, rel=1e-4)


def test_minimal_radius(curve, minimal):
    assert minimal.R_star == pytest.approx(10.981, abs=0.02)
    assert curve.theta_c < minimal.alpha_0 < curve.theta_plus
    assert not minimal.multiple_minima
    assert abs(bubble.h_function(curve, minimal.alpha_0) + 2.0) < 1e-4
    assert minimal.alpha_0_from_h == pytest.approx(minimal.alpha_0, abs=1e-5)
    # radius in length units at sigma = 1 is sqrt(1/2) R*
    assert minimal.radius == pytest.approx(minimal.R_star / math.sqrt(2.0), rel=1e-14)


def test_exact_radius_below_energy_radius(curve, minimal):
    grid = np.linspace(curve.theta_c + 0.01, 0.99, 40)
    energy_min = min(bubble.energy_radius(curve, a, 1.0, 1).radius for a in grid)
    assert minimal.radius <= energy_min


def test_h_sign_tracks_radius_slope(curve):
    for alpha in (0.5, 0.65, 0.75, 0.9):
        h = 1e-5
        slope = (bubble.radius_integral(curve, alpha + h)
                 - bubble.radius_integral(curve, alpha - h)) / (2 * h)
        assert np.sign(slope) == np.sign(bubble.h_function(curve, alpha) + 2.0)


def test_uniqueness_report(curve, minimal):
    rep = bubble.check_uniqueness(curve)
    assert rep.b0_ok and rep.b1_ok and rep.b2_ok and rep.b3_ok and rep.all_hold
    assert rep.h_increasing and rep.single_crossing
    assert curve.theta < rep.alpha_1 < curve.theta_plus
    assert float(bubble.g_function(curve, rep.alpha_1)) == pytest.approx(1.0, abs=1e-10)
    assert abs(rep.h_at_alpha0 + 2) < 1e-4
    assert rep.alpha_0 == pytest.approx(minimal.alpha_0, abs=1e-5)
    h = rep.h_samples[:, 1]
    assert h[0] < -100 and h[-1] > 100
    d = rep.to_dict()
    assert d["all_hold"] is True and len(d["h_samples"]) == rep.h_samples.shape[0]


def test_g_at_zero(curve, cubic):
    assert float(bubble.g_function(curve, 0.0)) == 1.0
    assert float(bubble.g_function(cubic, 1e-8)) == pytest.approx(1.0, abs=1e-6)
