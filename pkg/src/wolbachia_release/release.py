"""Release profiles and sizing of single and equally spaced releases.

A release profile is a sum of ``k`` normalised Gaussians carrying ``N / k``
mosquitoes each; against a wild background density ``N0`` it induces the
initial infection frequency ``X / (X + N0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._optimize import golden_section, grid_bracket
from ._quadrature import legendre_rule
from .bubble import bubble_profile, radius_integral
from .exceptions import DomainError, InvalidBox
from .reaction import ReactionCurve

DEFAULT_N0 = 1e-2
P_GRID = 512
P_FLOOR = 1e-6
ALPHA_GRID = 64


@dataclass(frozen=True)
class ReleaseProfile:
    """``k`` Gaussian releases; ``centers`` has shape ``(k, d)``."""

    dimension: int
    centers: np.ndarray = field(repr=False)
    per_site_mass: float
    variances: np.ndarray = field(repr=False)
    background: float = DEFAULT_N0

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError("dimension must be >= 1")
        if np.any(np.asarray(self.variances) <= 0):
            raise DomainError("release variances must be positive")
        if self.background <= 0:
            raise DomainError("background density N0 must be positive")

    @property
    def k(self) -> int:
        return int(self.centers.shape[0])

    @property
    def total_mass(self) -> float:
        return self.per_site_mass * self.k

    def density(self, x):
        """Released density ``X`` at points ``x`` of shape ``(..., d)``.

        In 1D a plain array of positions is accepted as well; arrays of
        two or more dimensions with a trailing axis of length 1 are read as
        coordinates.
        """
        x = np.asarray(x, dtype=float)
        if self.dimension == 1 and (x.ndim < 2 or x.shape[-1] != 1):
            x = x[..., None]
        diff = x[..., None, :] - self.centers
        r2 = np.sum(diff * diff, axis=-1)
        var = self.variances
        norm = (2.0 * math.pi * var) ** (-0.5 * self.dimension)
        return self.per_site_mass * np.sum(norm * np.exp(-0.5 * r2 / var), axis=-1)


def sample_release_profile(k: int, N: float, L: float, sigma0: float,
                           epsilon: float = 0.0, d: int = 1, rng_seed=None,
                           N0: float = DEFAULT_N0) -> ReleaseProfile:
    """Centers uniform on ``[-L, L]^d`` and variances uniform on ``sigma0 +/- epsilon``."""
    if L <= 0:
        raise InvalidBox(f"box half-width must be positive, got {L}")
    if k < 1 or N <= 0:
        raise DomainError("need k >= 1 and N > 0")
    if not 0 <= epsilon < sigma0:
        raise DomainError("need 0 <= epsilon < sigma0")
    rng = np.random.default_rng(rng_seed)
    centers = rng.uniform(-L, L, size=(k, d))
    variances = rng.uniform(sigma0 - epsilon, sigma0 + epsilon, size=k)
    return ReleaseProfile(d, centers, N / k, variances, N0)


def equally_spaced_profile(k: int, N: float, half_width: float, sigma0: float,
                           N0: float = DEFAULT_N0) -> ReleaseProfile:
    """``k >= 2`` releases evenly spread over ``[-half_width, half_width]`` in 1D."""
    if k < 2:
        raise DomainError("need at least two releases")
    centers = np.linspace(-half_width, half_width, k)[:, None]
    return ReleaseProfile(1, centers, N / k, np.full(k, float(sigma0)), N0)


def initial_frequency(profile: ReleaseProfile, x):
    X = profile.density(x)
    return X / (X + profile.background)


@dataclass(frozen=True)
class NecResult:
    holds: bool
    alpha: float | None = None
    shift: float | None = None


def default_alpha_grid(curve: ReactionCurve, n: int = ALPHA_GRID) -> np.ndarray:
    """Levels clustered towards theta_c, where bubbles are lowest."""
    span = curve.theta_plus - curve.theta_c
    return curve.theta_c + span * np.geomspace(1e-3, 1.0 - 1e-3, n)


def check_nec(initial, curve: ReactionCurve, sigma: float, alpha_grid=None,
              shift_grid=None, n_points: int = 256) -> NecResult:
    """Search for a shifted bubble lying below the initial frequency (1D).

    ``initial`` is a :class:`ReleaseProfile` or a callable returning the
    frequency at given positions.  The search is over finite grids, so a
    negative answer only means no witness was found there.
    """
    if isinstance(initial, ReleaseProfile):
        if initial.dimension != 1:
            raise DomainError("the bubble condition is only exact in 1D")
        profile = initial

        def p0(x):
            return initial_frequency(profile, x)

        default_shifts = np.union1d(np.linspace(initial.centers.min(), initial.centers.max(), 257),
                                    initial.centers[:, 0])
    else:
        p0 = initial
        default_shifts = np.array([0.0])
    alphas = default_alpha_grid(curve) if alpha_grid is None else np.asarray(alpha_grid, float)
    shifts = default_shifts if shift_grid is None else np.asarray(shift_grid, float)
    if alphas.size == 0 or shifts.size == 0:
        raise DomainError("alpha and shift grids must be nonempty")
    peak = float(np.max(p0(shifts)))
    for alpha in np.sort(alphas):
        if peak < alpha:
            break
        bubble = bubble_profile(curve, float(alpha), sigma, n_samples=n_points)
        r = bubble.radius
        x = np.concatenate([-r[::-1], r[1:]])
        v = np.concatenate([bubble.frequency[::-1], bubble.frequency[1:]])
        values = p0(shifts[:, None] + x[None, :])
        ok = np.all(values >= v, axis=1)
        if np.any(ok):
            return NecResult(True, float(alpha), float(shifts[np.argmax(ok)]))
    return NecResult(False)


def _inner_integrals(curve: ReactionCurve, alpha: float, p) -> np.ndarray:
    """``int_p^alpha dv / sqrt(F(alpha) - F(v))`` for ascending ``p`` < alpha.

    Uses ``v = alpha - t**2`` and fixed 16-point panels between consecutive
    grid points, accumulated from ``p = alpha`` downwards.
    """
    t = np.sqrt(alpha - np.asarray(p, dtype=float))[::-1]
    edges = np.concatenate([[0.0], t])
    x, w = legendre_rule(16)
    half = 0.5 * np.diff(edges)
    nodes = 0.5 * (edges[1:] + edges[:-1])[:, None] + half[:, None] * x
    vals = 2.0 * nodes / np.sqrt(curve.drop(np.full_like(nodes, alpha), nodes * nodes))
    pieces = half * (vals @ w)
    return np.cumsum(pieces)[::-1]


def J_alpha(curve: ReactionCurve, alpha: float, p) -> np.ndarray:
    """``log(p / (1 - p)) + (I_alpha(p) / 2)**2``, vectorised over ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    inner = np.array([radius_integral(curve, alpha, float(q)) for q in p])
    return np.log(p / (1.0 - p)) + 0.25 * inner**2


def J_alpha_prime(curve: ReactionCurve, alpha: float, p: float) -> float:
    """Derivative of ``J_alpha`` in ``p`` for ``0 < p < alpha``."""
    inner = radius_integral(curve, alpha, p)
    drop = float(curve.drop(alpha, alpha - p))
    return 1.0 / (p * (1.0 - p)) - 0.5 * inner / math.sqrt(drop)


def J_alpha_prime_limit(curve: ReactionCurve, alpha: float) -> float:
    """Limit of the derivative of ``J_alpha`` as ``p -> alpha``."""
    return 1.0 / (alpha * (1.0 - alpha)) - 1.0 / float(curve.f(alpha))


def j_alpha(curve: ReactionCurve, alpha: float) -> tuple[float, float]:
    """``max_p J_alpha(p)`` and its maximiser; grid scan then golden section."""
    p = np.geomspace(P_FLOOR, alpha, P_GRID)
    inner = np.empty_like(p)
    inner[:-1] = _inner_integrals(curve, alpha, p[:-1])
    inner[-1] = 0.0
    J = np.log(p / (1.0 - p)) + 0.25 * inner**2
    lo, hi, _ = grid_bracket(-J)
    if hi == lo:
        return float(J[lo]), float(p[lo])

    def neg(q):
        return -float(J_alpha(curve, alpha, q)[0])

    q, val = golden_section(neg, p[lo], p[hi], tol=1e-10 * alpha)
    best = int(np.argmax(J))
    if J[best] > -val:
        return float(J[best]), float(p[best])
    return -val, q


@dataclass(frozen=True)
class SingleReleaseSolution:
    """Threshold for a single Gaussian release: ``N >= N0 sqrt(2 pi sigma) e^j*``."""

    j_star: float
    alpha_star: float
    p_star: float
    N0: float = DEFAULT_N0

    def N_m(self, sigma_plus):
        """Minimal release size that invades for diffusivities up to ``sigma_plus``."""
        return self.N0 * np.sqrt(2.0 * math.pi * np.asarray(sigma_plus)) * math.exp(self.j_star)

    def sigma_plus(self, N):
        """Largest diffusivity for which a release of ``N`` invades."""
        ratio = np.asarray(N) / self.N0
        return math.exp(-2.0 * self.j_star) * ratio**2 / (2.0 * math.pi)


def single_release_threshold(curve: ReactionCurve,
                             N0: float = DEFAULT_N0) -> SingleReleaseSolution:
    """Minimise ``j_alpha`` over the level alpha."""
    span = curve.theta_plus - curve.theta_c
    alphas = curve.theta_c + span * np.linspace(0.0, 1.0, ALPHA_GRID + 2)[1:-1]
    values = np.array([j_alpha(curve, a)[0] for a in alphas])
    lo, hi, _ = grid_bracket(values)
    alpha, j_star = golden_section(lambda a: j_alpha(curve, a)[0], alphas[lo], alphas[hi],
                                   tol=1e-8)
    return SingleReleaseSolution(j_star, alpha, j_alpha(curve, alpha)[1], N0)


@dataclass(frozen=True)
class EqualSpacing:
    k: int
    alpha_opt: float
    j_star_k: float
    N_tilde_star: float


def _spacing_log_objective(curve, alpha, k):
    inner = radius_integral(curve, alpha, 0.0)
    return math.log(alpha / (1.0 - alpha)) + inner**2 / (4.0 * (k - 1) ** 2)


def equally_spaced_requirement(curve: ReactionCurve, k: int, sigma: float,
                               N0: float = DEFAULT_N0) -> EqualSpacing:
    """Optimal level and release size for ``k`` equally spaced releases.

    The exponent ``L_alpha**2 / (2 sigma (k-1)**2)`` is sigma-free, so the
    optimal level depends on ``k`` only.
    """
    if k < 2:
        raise DomainError("need k >= 2")
    span = curve.theta_plus - curve.theta_c
    alphas = curve.theta_c + span * np.linspace(0.0, 1.0, 258)[1:-1]
    values = np.array([_spacing_log_objective(curve, a, k) for a in alphas])
    lo, hi, _ = grid_bracket(values)
    a = alphas[lo] if lo > 0 else curve.theta_c + 1e-12 * span
    b = alphas[hi] if hi < alphas.size - 1 else curve.theta_plus - 1e-12 * span
    alpha, log_j = golden_section(lambda x: _spacing_log_objective(curve, x, k), a, b,
                                  tol=1e-10)
    j_k = math.exp(log_j)
    N_tilde = N0 * math.sqrt(2.0 * math.pi * sigma) * 0.5 * k * j_k
    return EqualSpacing(k, alpha, j_k, N_tilde)
