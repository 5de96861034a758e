"""Success probability of k uniform releases on a segment.

Positions are dimensionless (divided by ``sqrt(2 sigma)``).  A draw succeeds
when some run of consecutive points with gaps at most ``lam`` spans at least
``R_star``.  The exact measure of successful ordered k-tuples is obtained
from the leftmost-maximal-run recursion, which only involves piecewise
polynomials and is therefore evaluated without discretisation error.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.integrate import quad
from scipy.interpolate import BSpline, PPoly

from ._optimize import golden_section
from ._quadrature import legendre_rule
from .exceptions import DomainError, InvalidBox, RecursionDepthExceeded

LAMBDA = 2.0 * math.sqrt(math.log(2.0))
DEGRADED_LAMBDA = 1.0 / math.sqrt(2.0)
RECURSION_CAP = 24
SHARD_SIZE = 1 << 15
# gaps equal to lam up to rounding still count as chained
GAP_RTOL = 1e-12


def gap_bound(sigma: float) -> float:
    """Largest spacing of two equal Gaussians that keeps their sum above one peak."""
    return 2.0 * math.sqrt(2.0 * math.log(2.0) * sigma)


def min_k0(lam: float, R_star: float) -> int:
    return math.ceil(R_star / lam) + 1


@dataclass(frozen=True)
class ProtocolSpec:
    k: int
    L: float
    lam: float = LAMBDA
    R_star: float = 10.981

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if self.L <= 0:
            raise InvalidBox("half-box must be positive")
        if self.lam <= 0 or self.R_star <= 0:
            raise DomainError("lam and R_star must be positive")

    @property
    def k0(self) -> int:
        return min_k0(self.lam, self.R_star)

    @property
    def impossible(self) -> bool:
        return self.k < self.k0 or 2.0 * self.L < self.R_star


@dataclass(frozen=True)
class ProbabilityEstimate:
    value: float
    method: str
    std_error: float = 0.0
    n_samples: int = 0
    seed: int | None = None


def success_criterion(points, lam: float, R_star: float) -> bool:
    """True iff a run of consecutive gaps ``<= lam`` spans at least ``R_star``."""
    x = np.asarray(points, dtype=float)
    if x.size < 2:
        return False
    start = x[0]
    lam = lam * (1.0 + GAP_RTOL)
    for prev, cur in zip(x[:-1], x[1:]):
        if cur - prev > lam:
            start = cur
        elif cur - start >= R_star:
            return True
    return False


def _run_spans(x: np.ndarray, lam: float) -> np.ndarray:
    """Span of the current gap-run at every point of each sorted row."""
    m, k = x.shape
    breaks = np.zeros((m, k), dtype=np.int64)
    breaks[:, 1:] = np.where(np.diff(x, axis=1) > lam * (1.0 + GAP_RTOL), np.arange(1, k), 0)
    start = np.maximum.accumulate(breaks, axis=1)
    return x - np.take_along_axis(x, start, axis=1)


def _shard_sizes(n_samples: int, shard: int) -> list[int]:
    full, rest = divmod(n_samples, shard)
    return [shard] * full + ([rest] if rest else [])


def sharded_bernoulli(trial, n_samples: int, seed, threads: int = 1,
                      shard: int = SHARD_SIZE) -> tuple[int, int]:
    """Run ``trial(rng, m) -> successes`` over fixed shards; returns (hits, n).

    Shard ``i`` always draws from child ``i`` of ``SeedSequence(seed)``, so
    the total does not depend on the number of threads.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    sizes = _shard_sizes(n_samples, shard)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(args):
        child, m = args
        return int(trial(np.random.default_rng(child), m))

    jobs = list(zip(children, sizes))
    if threads <= 1:
        hits = sum(map(run, jobs))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = sum(pool.map(run, jobs))
    return hits, n_samples


def _estimate(hits: int, n: int, method: str, seed) -> ProbabilityEstimate:
    p = hits / n
    return ProbabilityEstimate(p, method, math.sqrt(p * (1.0 - p) / n), n, seed)


def mc_success_probability(proto: ProtocolSpec, n_samples: int, rng_seed=0,
                           threads: int = 1) -> ProbabilityEstimate:
    """Monte Carlo frequency of the success event with binomial standard error."""
    if proto.impossible:
        return ProbabilityEstimate(0.0, "monte_carlo", 0.0, n_samples, rng_seed)

    def trial(rng, m):
        x = np.sort(rng.uniform(-proto.L, proto.L, size=(m, proto.k)), axis=1)
        return np.count_nonzero(np.any(_run_spans(x, proto.lam) >= proto.R_star, axis=1))

    hits, n = sharded_bernoulli(trial, n_samples, rng_seed, threads)
    return _estimate(hits, n, "monte_carlo", rng_seed)


def gamma_measure(i: int, lam: float, u, v):
    """Measure of chains ``u = y_1 <= ... <= y_i = v`` with all gaps ``<= lam``.

    It depends on ``w = v - u`` only and equals ``lam**(i-2)`` times the
    cardinal B-spline of order ``i - 1`` at ``w / lam``.
    """
    if i < 2:
        raise DomainError("i must be >= 2")
    w = np.asarray(v, dtype=float) - np.asarray(u, dtype=float)
    if i == 2:
        return ((w >= 0) & (w <= lam)).astype(float)
    x = w / lam
    n = i - 1
    # values[r] holds M_{order}(x - r) for r = 0..n-order
    values = [((x - r >= 0) & (x - r < 1)).astype(float) for r in range(n)]
    for order in range(2, n + 1):
        values = [((x - r) * values[r] + (order - (x - r)) * values[r + 1]) / (order - 1)
                  for r in range(n - order + 1)]
    return lam ** (i - 2) * values[0]


@lru_cache(maxsize=4096)
def _truncated_chain_poly(i: int, n: int, lam: float, R_star: float) -> PPoly | None:
    """``n``-fold antiderivative of ``gamma_i(0, w) 1[w >= R_star]``."""
    top = (i - 1) * lam
    if top <= R_star:
        return None
    spline = BSpline.basis_element(lam * np.arange(i), extrapolate=False)
    deg = i - 2
    inner = lam * np.arange(1, i - 1)
    edges = np.concatenate([[R_star], inner[inner > R_star], [top, top + 1.0]])
    coeffs = np.zeros((deg + 1, edges.size - 1))
    for r in range(deg + 1):
        d = spline.derivative(r) if r else spline
        vals = np.nan_to_num(d(edges[:-2]))
        coeffs[deg - r, :-1] = vals / math.factorial(r)
    coeffs *= lam**deg
    poly = PPoly(coeffs, edges)
    return poly.antiderivative(n) if n else poly


def _chain_antiderivative(i, n, lam, R_star, z):
    poly = _truncated_chain_poly(i, n, lam, R_star)
    z = np.asarray(z, dtype=float)
    if poly is None:
        return np.zeros_like(z)
    return np.where(z > R_star, poly(np.maximum(z, R_star)), 0.0)


@lru_cache(maxsize=256)
def _beta_atoms(k: int, k0: int) -> tuple:
    """Expansion of ``B_k`` into atoms ``(coef, chains, order, shift)``.

    An atom stands for ``coef * I^order(h_{c1} * ... * h_{cr})(s - shift*lam)``
    where ``h_c`` is the truncated chain density and ``I`` antidifferentiation.
    """
    acc: dict = {}

    def add(coef, chains, order, shift):
        key = (tuple(sorted(chains)), order, shift)
        acc[key] = acc.get(key, 0) + coef

    for i in range(k0, k + 1):
        for j in range(1, k - i + 2):
            m = k - i - j + 1
            c = 1 if m >= 1 else 0
            if j == 1:
                add(1, (i,), m + 2, c)
                continue
            add(1, (i,), m + j + 1, c + 1)
            if j - 1 >= k0:
                for coef, chains, order, shift in _beta_atoms(j - 1, k0):
                    add(-coef, chains + (i,), order + m + 1, shift + c + 1)
    return tuple((coef, chains, order, shift) for (chains, order, shift), coef in acc.items()
                 if coef != 0)


def _atom_value(chains, order, lam, R_star, z):
    """Evaluate ``I^order(h_{c1} * ... * h_{cr})`` at ``z`` (1D array)."""
    if len(chains) == 1:
        return _chain_antiderivative(chains[0], order, lam, R_star, z)
    first, rest = chains[0], chains[1:]
    top = (first - 1) * lam
    out = np.zeros_like(z)
    live = z > len(chains) * R_star
    if top <= R_star or not np.any(live):
        return out
    zl = z[live]
    own = lam * np.arange(1, first - 1)
    own = np.concatenate([[R_star], own[own > R_star], [top]])
    span = sum(c - 1 for c in rest)
    combos = (np.arange(len(rest))[:, None] * R_star
              + lam * np.arange(span + 1)[None, :]).ravel()
    cuts = np.concatenate([np.broadcast_to(own, (zl.size, own.size)),
                           zl[:, None] - combos[None, :]], axis=1)
    cuts = np.sort(np.clip(cuts, R_star, top), axis=1)
    degree = (first - 2) + sum(c - 2 for c in rest) + len(rest) - 1 + order
    x, wts = legendre_rule(degree // 2 + 2)
    half = 0.5 * np.diff(cuts, axis=1)
    nodes = 0.5 * (cuts[:, 1:] + cuts[:, :-1])[..., None] + half[..., None] * x
    h = gamma_measure(first, lam, 0.0, nodes)
    inner = _atom_value(rest, order, lam, R_star, (zl[:, None, None] - nodes).ravel())
    vals = (h * inner.reshape(nodes.shape)) @ wts
    out[live] = np.sum(half * vals, axis=1)
    return out


def beta_measure(k: int, lam: float, R_star: float, s, cap: int = RECURSION_CAP):
    """Measure ``B_k(s)`` of successful ordered k-tuples in an interval of length ``s``."""
    if k < 2:
        raise DomainError("k must be >= 2")
    if k > cap:
        raise RecursionDepthExceeded(f"k={k} exceeds the recursion cap {cap}")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise DomainError("span must be nonnegative")
    k0 = min_k0(lam, R_star)
    total = np.zeros_like(s_arr)
    if k >= k0:
        for coef, chains, order, shift in _beta_atoms(k, k0):
            total += coef * _atom_value(chains, order, lam, R_star, s_arr - shift * lam)
    total[s_arr <= R_star] = 0.0
    return total if np.ndim(s) else float(total[0])


def exact_success_probability(proto: ProtocolSpec,
                              cap: int = RECURSION_CAP) -> ProbabilityEstimate:
    """``B_k(2L) / tau_k(2L)`` from the exact recursion."""
    if proto.k < 2 or proto.impossible:
        return ProbabilityEstimate(0.0, "exact")
    s = 2.0 * proto.L
    b = beta_measure(proto.k, proto.lam, proto.R_star, s, cap)
    log_tau = proto.k * math.log(s) - math.lgamma(proto.k + 1)
    value = b * math.exp(-log_tau)
    return ProbabilityEstimate(float(min(max(value, 0.0), 1.0)), "exact")


@dataclass(frozen=True)
class K0Constants:
    k0: int
    f1: float
    f2: float


def _chain_cdf(k0, lam, R_star, z):
    """``int_{R_star}^z gamma_{k0}(0, w) dw``."""
    if z <= R_star:
        return 0.0
    pts = [p for p in lam * np.arange(1, k0) if R_star < p < z]
    return quad(lambda w: float(gamma_measure(k0, lam, 0.0, w)), R_star, z,
                points=pts or None, epsabs=0.0, epsrel=1e-13, limit=200)[0]


def k0_constants(lam: float, R_star: float) -> K0Constants:
    k0 = min_k0(lam, R_star)
    top = (k0 - 1) * lam
    f1 = _chain_cdf(k0, lam, R_star, top)
    pts = [p for p in lam * np.arange(1, k0) if R_star < p < top]
    f2 = quad(lambda z: _chain_cdf(k0, lam, R_star, z), R_star, top,
              points=pts or None, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return K0Constants(k0, f1, f2)


def beta_k0_closed_form(lam: float, R_star: float, L: float, chi: float | None = None,
                        constants: K0Constants | None = None) -> float:
    """Three-branch form of ``beta_{k0}(-L, chi)`` (``chi = L`` by default)."""
    s = (2.0 * L) if chi is None else (chi + L)
    c = constants or k0_constants(lam, R_star)
    top = (c.k0 - 1) * lam
    if s <= R_star:
        return 0.0
    if s < top:
        pts = [p for p in lam * np.arange(1, c.k0) if R_star < p < s]
        return quad(lambda z: _chain_cdf(c.k0, lam, R_star, z), R_star, s,
                    points=pts or None, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return (s - top) * c.f1 + c.f2


def k0_ratio(lam: float, R_star: float, L: float,
             constants: K0Constants | None = None) -> float:
    """``beta_{k0} / tau_{k0}`` on ``[-L, L]``."""
    c = constants or k0_constants(lam, R_star)
    s = 2.0 * L
    return beta_k0_closed_form(lam, R_star, L, constants=c) * math.factorial(c.k0) / s**c.k0


@dataclass(frozen=True)
class OptimalBox:
    L_hat: float
    lower_bound: float
    probability: float
    in_affine_branch: bool


def optimal_box_k0(lam: float, R_star: float) -> OptimalBox:
    """Half-box maximising the k0-release bound and the guaranteed lower bound on it."""
    c = k0_constants(lam, R_star)
    two_L = c.k0 * lam - c.k0 / (c.k0 - 1) * c.f2 / c.f1
    bound = c.k0 / (c.k0 - 1) * R_star
    if two_L < bound - 1e-12 * bound:
        raise ArithmeticError("2 L_hat fell below its theoretical lower bound")
    in_affine = two_L >= (c.k0 - 1) * lam
    if not in_affine:
        # The stationary point of the affine branch is not admissible; search the
        # full closed form instead.
        L, negp = golden_section(lambda x: -k0_ratio(lam, R_star, x, c),
                                 0.5 * R_star, 0.5 * (c.k0 - 1) * lam, tol=1e-10)
        return OptimalBox(L, 0.5 * bound, -negp, False)
    L_hat = 0.5 * two_L
    return OptimalBox(L_hat, 0.5 * bound, k0_ratio(lam, R_star, L_hat, c), True)


def two_gaussian_margin(h: float, sigma: float, n: int = 4097) -> float:
    """``min_{|x|<=h} G(x+h) + G(x-h) - G(0)`` for the centred Gaussian of variance sigma."""
    x = np.linspace(-h, h, n)
    norm = 1.0 / math.sqrt(2.0 * math.pi * sigma)

    def g(y):
        return norm * np.exp(-0.5 * y * y / sigma)

    return float(np.min(g(x + h) + g(x - h)) - norm)


def mc_cover_probability(k: int, N: float, N0: float, box: float, radius: float,
                         alpha: float, sigma: float, d: int = 1, n_samples: int = 1000,
                         seed=0, threads: int = 1) -> ProbabilityEstimate:
    """Frequency of draws whose induced frequency exceeds ``alpha`` on some ball.

    Release centres are uniform on ``[-box, box]^d`` with ``N`` mosquitoes
    each, spread as Gaussians of variance ``sigma``.  The frequency is
    sampled on a grid of step ``sqrt(2 sigma log 2) / 8`` and the ball radius
    is enlarged by one step, which can only lower the estimate.
    """
    if d not in (1, 2):
        raise DomainError("d must be 1 or 2")
    if box <= 0:
        raise InvalidBox("box half-width must be positive")
    step = math.sqrt(2.0 * sigma * math.log(2.0)) / 8.0
    reach = radius + step
    axis = np.arange(-box, box + step / 2, step)
    need = int(math.ceil(2.0 * reach / step)) + 1
    norm = N * (2.0 * math.pi * sigma) ** (-0.5 * d)
    offsets = np.arange(-math.ceil(reach / step), math.ceil(reach / step) + 1)
    disk = (offsets[:, None] ** 2 + offsets[None, :] ** 2) * step**2 <= reach**2

    def density_1d(centers):
        diff = axis[None, :, None] - centers[:, None, :]
        return norm * np.exp(-0.5 * diff**2 / sigma).sum(axis=-1)

    def trial(rng, m):
        hits = 0
        for lo in range(0, m, 256):
            b = min(256, m - lo)
            centers = rng.uniform(-box, box, size=(b, k, d))
            if d == 1:
                X = density_1d(centers[..., 0])
                ok = X / (X + N0) >= alpha
                for row in ok:
                    hits += _longest_run(row) >= need
            else:
                for r in range(b):
                    ex = np.exp(-0.5 * (axis[:, None] - centers[r, :, 0]) ** 2 / sigma)
                    ey = np.exp(-0.5 * (axis[:, None] - centers[r, :, 1]) ** 2 / sigma)
                    X = norm * ex @ ey.T
                    ok = X / (X + N0) >= alpha
                    hits += bool(ndimage.binary_erosion(ok, structure=disk).any())
        return hits

    hits, n = sharded_bernoulli(trial, n_samples, seed, threads, shard=1024)
    return _estimate(hits, n, "monte_carlo", seed)


def _longest_run(mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    padded = np.concatenate([[0], mask.astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(padded))
    return int(np.max(edges[1::2] - edges[::2]))
