"""Critical bubbles: invasion radii, profiles, ground state and energies.

Every radius integral of the form ``int dv / sqrt(F(alpha) - F(v))`` has an
inverse square-root singularity at ``v = alpha``.  It is removed with the
substitution ``v = alpha - t**2``, after which the integrand tends to
``2 / sqrt(f(alpha))`` and adaptive Gauss-Legendre handles the rest.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from ._optimize import golden_section, grid_bracket
from ._quadrature import adaptive_gauss_legendre, gauss_legendre, legendre_rule
from .exceptions import DivergentIntegral, DomainError, GridTooCoarse, WolbachiaReleaseError
from .reaction import ReactionCurve

RTOL = 1e-12
ALPHA_GRID = 256
RHO_GRID = 1024
GOLDEN_TOL = 1e-8
TAIL_FRACTION = 1e-4


class EmptyFeasibleSet(WolbachiaReleaseError):
    """No rho in (0, 1) makes the energy-radius denominator positive."""


@dataclass(frozen=True)
class BubbleProfile:
    """Radial samples of an alpha-bubble, radius ascending from 0 to L_alpha."""

    alpha: float
    sigma: float
    support_radius: float
    radius: np.ndarray = field(repr=False)
    frequency: np.ndarray = field(repr=False)

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.radius, self.frequency])

    def __call__(self, x):
        """Bubble value at signed positions ``x`` (zero outside the support)."""
        r = np.abs(np.asarray(x, dtype=float))
        return np.interp(r, self.radius, self.frequency, right=0.0)


@dataclass(frozen=True)
class RadiusEstimate:
    alpha: float
    dimension: int
    radius: float
    rho_opt: float
    feasible: bool


@dataclass(frozen=True)
class MinimalRadius:
    """Minimiser of the 1D bubble radius over the level alpha.

    ``R_star`` is the dimensionless span ``2 L / sqrt(2 sigma)``.
    """

    alpha_0: float
    radius: float
    R_star: float
    multiple_minima: bool
    alpha_0_from_h: float | None = None


@dataclass
class UniquenessReport:
    b0_ok: bool
    b1_ok: bool
    b2_ok: bool
    b3_ok: bool
    alpha_1: float
    alpha_0: float
    h_at_alpha0: float
    h_increasing: bool
    single_crossing: bool
    g_samples: np.ndarray = field(repr=False)
    h_samples: np.ndarray = field(repr=False)

    @property
    def all_hold(self) -> bool:
        return self.b0_ok and self.b1_ok and self.b2_ok and self.b3_ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out["g_samples"] = self.g_samples.tolist()
        out["h_samples"] = self.h_samples.tolist()
        out["all_hold"] = self.all_hold
        return out


def _check_level(curve: ReactionCurve, alpha: float, omega: float = 0.0):
    if not (0.0 <= omega <= alpha):
        raise DomainError(f"omega={omega} must lie in [0, alpha]")
    if alpha > curve.theta_plus or alpha < curve.theta_c:
        raise DomainError(f"alpha={alpha} outside [theta_c, theta_plus]")
    if omega == alpha:
        return
    if alpha == curve.theta_c and omega == 0.0:
        raise DivergentIntegral("the radius integral diverges at alpha = theta_c")
    if alpha >= curve.theta_plus or curve.f(alpha) <= 0:
        raise DivergentIntegral("f(alpha) = 0: the bubble has infinite support")


def radius_integral(curve: ReactionCurve, alpha: float, omega: float = 0.0,
                    rtol: float = RTOL) -> float:
    """``int_omega^alpha dv / sqrt(F(alpha) - F(v))`` (sigma-free)."""
    _check_level(curve, alpha, omega)
    if omega == alpha:
        return 0.0

    def integrand(t):
        return 2.0 * t / np.sqrt(curve.drop(np.full_like(t, alpha), t * t))

    return adaptive_gauss_legendre(integrand, 0.0, math.sqrt(alpha - omega), rtol=rtol)


def chi(curve: ReactionCurve, alpha: float, omega: float, sigma: float) -> float:
    """Radius at which the bubble of level ``alpha`` takes the value ``omega``."""
    return math.sqrt(sigma / 2.0) * radius_integral(curve, alpha, omega)


def bubble_radius_1d(curve: ReactionCurve, alpha: float, sigma: float) -> float:
    """Half-width L_alpha of the support of the 1D alpha-bubble."""
    return math.sqrt(sigma / 2.0) * radius_integral(curve, alpha, 0.0)


def bubble_profile(curve: ReactionCurve, alpha: float, sigma: float,
                   n_samples: int = 513) -> BubbleProfile:
    """Sample the bubble by inverting ``chi`` on a frequency grid.

    Frequencies are spaced uniformly in ``t = sqrt(alpha - omega)``, which is
    close to uniform in radius near the top of the bubble.
    """
    if n_samples < 2:
        raise DomainError("n_samples must be at least 2")
    _check_level(curve, alpha, 0.0)
    t = np.linspace(0.0, math.sqrt(alpha), n_samples)

    def integrand(s):
        return 2.0 * s / np.sqrt(curve.drop(np.full_like(s, alpha), s * s))

    pieces = [adaptive_gauss_legendre(integrand, lo, hi, rtol=RTOL)
              for lo, hi in zip(t[:-1], t[1:])]
    radius = math.sqrt(sigma / 2.0) * np.concatenate([[0.0], np.cumsum(pieces)])
    frequency = alpha - t * t
    frequency[-1] = 0.0
    radius.setflags(write=False)
    frequency.setflags(write=False)
    return BubbleProfile(alpha, sigma, float(radius[-1]), radius, frequency)


def decay_rate(curve: ReactionCurve, sigma: float) -> float:
    """Exponential decay rate ``sqrt(-f'(0) / sigma)`` of the ground state."""
    slope = float(curve.f_prime(0.0))
    if slope >= 0:
        raise DomainError("f'(0) must be negative for exponential decay")
    return math.sqrt(-slope / sigma)


def ground_state(curve: ReactionCurve, sigma: float, x):
    """Ground state ``u_{theta_c}`` at positions ``x`` (even in ``x``).

    Values below ``1e-4 * theta_c`` use the exponential tail of the
    linearisation at 0 instead of inverting ``chi``.
    """
    tc = curve.theta_c
    w_switch = TAIL_FRACTION * tc
    x_switch = chi(curve, tc, w_switch, sigma)
    rate = decay_rate(curve, sigma)

    def one(xi):
        xi = abs(float(xi))
        if xi == 0.0:
            return tc
        if xi >= x_switch:
            return w_switch * math.exp(-rate * (xi - x_switch))
        return brentq(lambda w: chi(curve, tc, w, sigma) - xi, w_switch, tc,
                      xtol=1e-15, rtol=1e-13)

    arr = np.asarray(x, dtype=float)
    out = np.array([one(v) for v in arr.ravel()]).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def _trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[[0, -1]] = 0.5 * dx
    return w


def energy(field, dx: float, curve: ReactionCurve, sigma: float,
           gradient: str = "centered") -> float:
    """Discrete energy ``int sigma/2 |grad u|^2 - F(u)`` on a uniform grid.

    Works for 1D and 2D fields.  With ``gradient="centered"`` derivatives are
    centred inside and one-sided at the boundary; ``"forward"`` uses edge
    differences, which is the Dirichlet form of the reflecting 3-point
    Laplacian and hence the exact Lyapunov functional of the PDE scheme.
    The potential term is integrated by the trapezoid rule.
    """
    u = np.asarray(field, dtype=float)
    if u.ndim not in (1, 2):
        raise DomainError("only 1D and 2D fields are supported")
    if min(u.shape) < 3:
        raise GridTooCoarse("need at least 3 nodes per axis")
    weights = [_trapezoid_weights(n, dx) for n in u.shape]
    if u.ndim == 1:
        potential = float(weights[0] @ curve.F(u))
    else:
        potential = float(weights[0] @ curve.F(u) @ weights[1])
    if gradient == "centered":
        grads = np.gradient(u, dx)
        if u.ndim == 1:
            grads = [grads]
        density = 0.5 * sigma * sum(g * g for g in grads)
        for _ in range(u.ndim):
            density = trapezoid(density, dx=dx, axis=0)
        return float(density) - potential
    if gradient != "forward":
        raise DomainError(f"unknown gradient scheme {gradient!r}")
    if u.ndim == 1:
        grad = float(np.sum(np.diff(u) ** 2)) / dx
    else:
        grad = (float(np.sum(np.diff(u, axis=0) ** 2 @ weights[1]))
                + float(np.sum(weights[0] @ np.diff(u, axis=1) ** 2))) / dx
    return 0.5 * sigma * grad - potential


def bubble_energy_1d(curve: ReactionCurve, alpha: float, sigma: float) -> float:
    """Energy of the 1D alpha-bubble from its closed form in ``v``.

    At ``alpha = theta_c`` this is the (finite) ground-state energy; at
    ``alpha = theta_plus`` the support is unbounded and the energy is -inf.
    """
    if alpha < curve.theta_c or alpha > curve.theta_plus:
        raise DomainError(f"alpha={alpha} outside [theta_c, theta_plus]")
    if alpha >= curve.theta_plus or curve.f(alpha) <= 0:
        return -math.inf
    Fa = float(curve.F(alpha))

    def integrand(t):
        drop = curve.drop(np.full_like(t, alpha), t * t)
        return 2.0 * t * (2.0 * drop - Fa) / np.sqrt(2.0 * drop)

    return 2.0 * math.sqrt(sigma) * adaptive_gauss_legendre(
        integrand, 0.0, math.sqrt(alpha), rtol=RTOL, atol=1e-16)


def _energy_denominator(curve, alpha, rho, d):
    x, w = legendre_rule(64)
    nodes = 0.5 * alpha * (1.0 + x)
    rho = np.asarray(rho, dtype=float)
    shape = (1.0 - (1.0 - rho)[..., None] * nodes / alpha) ** d
    return 0.5 * alpha * np.sum(shape * curve.f(nodes) * w, axis=-1)


def _trapezoid_radius_sq(curve, alpha, rho, sigma, d):
    """Squared energy-method radius of the truncated-cone profile.

    The gradient term is counted as ``sigma |grad u|^2``, twice the energy
    density, so the profile has strictly negative energy at this radius and
    zero energy at ``radius / sqrt(2)``.
    """
    rho = np.asarray(rho, dtype=float)
    den = _energy_denominator(curve, alpha, rho, d)
    geom = (1.0 - rho**d) / (1.0 - rho) ** 2
    out = np.full(rho.shape, np.inf)
    ok = den > 0
    out[ok] = sigma * alpha**2 * geom[ok] / den[ok]
    return out


def energy_radius(curve: ReactionCurve, alpha: float, sigma: float,
                  d: int = 1) -> RadiusEstimate:
    """Energy-method radius of a plateau-plus-linear-ramp profile.

    The profile equals ``alpha`` on ``|x| <= rho R`` and decays linearly to 0
    at ``|x| = R``; from this radius on its energy is negative.  ``rho`` is scanned
    on a grid restricted to the feasible set and refined by golden section.
    """
    if d < 1:
        raise DomainError("dimension must be >= 1")
    if not curve.theta_c < alpha <= curve.theta_plus:
        raise DomainError(f"alpha={alpha} outside (theta_c, theta_plus]")
    grid = np.linspace(0.0, 1.0, RHO_GRID + 2)[1:-1]
    values = _trapezoid_radius_sq(curve, alpha, grid, sigma, d)
    if not np.any(np.isfinite(values)):
        raise EmptyFeasibleSet(f"no feasible rho at alpha={alpha}")
    lo, hi, _ = grid_bracket(values)
    a = 0.0 if lo == 0 else grid[lo]
    b = 1.0 - 1e-12 if hi == grid.size - 1 else grid[hi]
    rho, r2 = golden_section(
        lambda r: float(_trapezoid_radius_sq(curve, alpha, np.array(r), sigma, d)),
        a, b, tol=GOLDEN_TOL)
    return RadiusEstimate(alpha, d, math.sqrt(r2), rho, bool(np.isfinite(r2)))


def plateau_moments(curve: ReactionCurve, alpha: float) -> tuple[float, float]:
    """``(U, V)`` with ``V`` the mean of ``F`` on [0, alpha] and ``U = F(alpha) - V``."""
    V = float(gauss_legendre(curve.F, 0.0, alpha, order=48)) / alpha
    return float(curve.F(alpha)) - V, V


def energy_radius_1d_closed_form(curve: ReactionCurve, alpha: float,
                                 sigma: float) -> tuple[float, float]:
    """Closed-form optimum in 1D: ``(radius, rho)``."""
    U, V = plateau_moments(curve, alpha)
    Fa = float(curve.F(alpha))
    rho = 0.5 - 0.5 * V / U
    return 2.0 * math.sqrt(sigma) * alpha * math.sqrt(U) / Fa, rho


def _level_grid(curve: ReactionCurve, n: int = ALPHA_GRID) -> np.ndarray:
    return np.linspace(curve.theta_c, curve.theta_plus, n + 2)[1:-1]


def min_bubble_radius(curve: ReactionCurve, sigma: float = 1.0,
                      cross_check: bool = True) -> MinimalRadius:
    """Minimise L_alpha over the level by a grid bracket and golden section.

    When ``cross_check`` is set the minimiser is also located as the root of
    ``h(alpha) = -2``; a disagreement is reported through ``alpha_0_from_h``.
    """
    grid = _level_grid(curve)

    def span(a):
        return radius_integral(curve, a, 0.0, rtol=1e-13)

    values = np.array([span(a) for a in grid])
    lo, hi, multiple = grid_bracket(values)
    alpha0, r_star = golden_section(span, grid[lo], grid[hi], tol=GOLDEN_TOL)
    alpha_h = None
    if cross_check:
        try:
            alpha_h = brentq(lambda a: h_function(curve, a) + 2.0, grid[lo], grid[hi],
                             xtol=1e-13)
        except ValueError:
            alpha_h = None
    return MinimalRadius(alpha0, math.sqrt(sigma / 2.0) * r_star, r_star, multiple, alpha_h)


def g_function(curve: ReactionCurve, x):
    """``x f'(x) / f(x)`` with its limit 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0.0, 1.0, x)
    out = safe * curve.f_prime(safe) / curve.f(safe)
    return np.where(x == 0.0, 1.0, out)


def h_function(curve: ReactionCurve, alpha: float) -> float:
    """Stationarity function of L_alpha: ``dL/dalpha = 0`` iff ``h = -2``.

    With ``1 - w = s**2`` both terms of the integrand behave like ``s**-3``;
    their difference is formed from the relative deviation of
    ``F(alpha) - F(alpha w)`` from its linearisation to avoid cancellation.
    """
    if not curve.theta_c < alpha < curve.theta_plus:
        raise DomainError(f"alpha={alpha} outside (theta_c, theta_plus)")
    fa = float(curve.f(alpha))
    x, wts = legendre_rule(16)

    def integrand(s):
        width = alpha * s * s
        half = 0.5 * width
        u = half[..., None] * (1.0 + x)
        excess = half * np.sum(curve.deviation(alpha, u) * wts, axis=-1)
        wide = width > 0.05
        if np.any(wide):
            full = curve.drop(np.full_like(s, alpha), width) - width * fa
            excess = np.where(wide, full, excess)
        rel = excess / (width * fa)
        return 2.0 * -np.expm1(-1.5 * np.log1p(rel)) / (s * s)

    return adaptive_gauss_legendre(integrand, 0.0, 1.0, rtol=1e-11, atol=1e-15)


def check_uniqueness(curve: ReactionCurve, n_grid: int = 4096,
                     n_h: int = 64) -> UniquenessReport:
    """Grid check of the sufficient conditions for a unique minimal radius."""
    tp = curve.theta_plus
    b0 = (curve.f_prime(0.0) < 0 and curve.f_prime(curve.theta) > 0
          and curve.f_prime(tp) < 0)
    b1 = curve.F_plus > 0
    x = np.linspace(0.0, tp, n_grid)
    fx, dfx, ddfx = curve.f(x), curve.f_prime(x), curve.f_second(x)
    lhs = (dfx + x * ddfx) * fx
    rhs = x * dfx**2
    b2 = bool(np.all(lhs <= rhs + 1e-14 * (np.abs(lhs) + np.abs(rhs) + 1e-300)))
    eps = 1e-9
    alpha_1 = brentq(lambda a: float(g_function(curve, a)) - 1.0,
                     curve.theta + eps, tp - eps, xtol=1e-14)
    start = max(curve.theta_c, alpha_1)
    a = np.linspace(start, tp, n_grid)[1:]
    fa, dfa = curve.f(a), curve.f_prime(a)
    lhs3 = curve.F(a) * (fa + a * dfa)
    rhs3 = a * fa**2
    b3 = bool(np.all(lhs3 <= rhs3 + 1e-14 * (np.abs(lhs3) + np.abs(rhs3))))
    gx = np.linspace(0.0, tp, 257)
    gx = gx[np.abs(gx - curve.theta) > 1e-9]
    g_samples = np.column_stack([gx, g_function(curve, gx)])
    # Geometric clustering towards both ends shows the divergence of h.
    u = np.linspace(-1.0, 1.0, n_h)
    frac = 0.5 * (1.0 + np.sign(u) * (1.0 - np.exp(-6.0 * np.abs(u))) / (1.0 - math.exp(-6.0)))
    ha = curve.theta_c + (tp - curve.theta_c) * np.clip(frac, 1e-5, 1.0 - 1e-5)
    hv = np.array([h_function(curve, al) for al in ha])
    h_samples = np.column_stack([ha, hv])
    increasing = bool(np.all(np.diff(hv) > 0))
    crossings = np.flatnonzero(np.diff(np.sign(hv + 2.0)) != 0)
    single = crossings.size == 1
    alpha_0 = math.nan
    h0 = math.nan
    if crossings.size >= 1:
        i = crossings[0]
        alpha_0 = brentq(lambda al: h_function(curve, al) + 2.0, ha[i], ha[i + 1],
                         xtol=1e-14)
        h0 = h_function(curve, alpha_0)
    return UniquenessReport(bool(b0), bool(b1), b2, b3, float(alpha_1), float(alpha_0),
                            float(h0), increasing, single, g_samples, h_samples)
