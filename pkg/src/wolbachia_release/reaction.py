"""Bistable reaction term for the infection frequency.

The nonlinearity is a rational function of the frequency ``p`` built from the
biological parameters (fecundity cost, CI strength, death-rate ratio,
transmission flaw).  Its antiderivative ``F`` is tabulated once on a uniform
grid and completed by a local Gauss-Legendre panel, so evaluations are exact
to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from ._quadrature import gauss_legendre, legendre_rule
from .exceptions import (DomainError, NotBistable, RootBracketingFailed,
                         SingularDenominator)

ROOT_XTOL = 1e-14
SCAN_POINTS = 4096
F_NODES = 2048
_NARROW = 0.05


@dataclass(frozen=True)
class ReactionParams:
    """Biological parameters of the reaction term.

    ``sigma`` is the diffusivity (length^2/day); the reaction itself does not
    use it but every downstream radius does.
    """

    d_s: float = 0.27
    s_f: float = 0.1
    s_h: float = 0.8
    delta: float = 10.0 / 9.0
    mu: float = 0.0
    sigma: float = 830.0

    def __post_init__(self):
        for name in ("d_s", "s_f", "s_h", "delta", "mu", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.d_s <= 0 or self.delta <= 0 or self.sigma <= 0:
            raise DomainError("d_s, delta and sigma must be positive")
        if not 0 <= self.s_f < 1:
            raise DomainError("s_f must lie in [0, 1)")
        if not 0 < self.s_h <= 1:
            raise DomainError("s_h must lie in (0, 1]")
        if not 0 <= self.mu < 1:
            raise DomainError("mu must lie in [0, 1)")

    def polynomials(self) -> tuple[Polynomial, Polynomial]:
        """Numerator and denominator of ``f`` as polynomials in ``p``."""
        vert = (1.0 - self.s_f) * ((1.0 - self.mu) / self.delta + self.mu)
        quad = Polynomial([(1.0 - self.s_f) * (1.0 - self.mu) / self.delta - 1.0,
                           1.0 + self.s_h - vert,
                           -self.s_h])
        num = self.delta * self.d_s * Polynomial([0.0, 1.0]) * quad
        den = Polynomial([1.0, -(self.s_f + self.s_h), self.s_h])
        return num, den


def _as_polynomial(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial(np.asarray(p, dtype=float))


class ReactionCurve:
    """Immutable bistable nonlinearity ``f`` with antiderivative and roots.

    Build it with :func:`build_reaction` for the biological model or with
    :meth:`from_polynomial` for polynomial test curves.  ``theta`` is the
    unstable root, ``theta_plus`` the upper stable root and ``theta_c`` the
    zero of ``F`` in between.
    """

    def __init__(self, numerator: Polynomial, denominator: Polynomial | None = None,
                 params: ReactionParams | None = None, n_nodes: int = F_NODES):
        self._num = _as_polynomial(numerator)
        self._den = Polynomial([1.0]) if denominator is None else _as_polynomial(denominator)
        self._dnum = self._num.deriv()
        self._dden = self._den.deriv()
        self._ddnum = self._dnum.deriv()
        self._ddden = self._dden.deriv()
        self.params = params
        scan = np.linspace(0.0, 1.0, SCAN_POINTS + 1)
        if np.any(self._den(scan) <= 0):
            raise SingularDenominator("denominator of f must stay positive on [0, 1]")
        if abs(self._num(0.0)) > 1e-14:
            raise NotBistable("f(0) must vanish")
        self.theta, self.theta_plus = self._locate_roots(scan)
        self._nodes = np.linspace(0.0, self.theta_plus, n_nodes + 1)
        self._h = self._nodes[1] - self._nodes[0]
        panels = gauss_legendre(self.f, self._nodes[:-1], self._nodes[1:], order=16)
        table = np.concatenate([[0.0], np.cumsum(panels)])
        table.setflags(write=False)
        self._table = table
        self.F_plus = float(table[-1])
        if not self.F_plus > 0:
            raise NotBistable(f"F(theta_plus) = {self.F_plus:.3e} must be positive")
        self.theta_c = float(brentq(lambda x: float(self.F(x)), self.theta,
                                    self.theta_plus, xtol=ROOT_XTOL))

    @classmethod
    def from_polynomial(cls, coefficients, n_nodes: int = F_NODES) -> "ReactionCurve":
        """Polynomial curve ``f(p) = sum c_i p^i`` (ascending coefficients)."""
        return cls(Polynomial(coefficients), None, None, n_nodes)

    def _locate_roots(self, scan):
        values = self.f(scan[1:])
        if abs(values[-1]) < 1e-13:
            values[-1] = 0.0
        if values[0] >= 0:
            raise NotBistable("f must be negative just above 0")
        pos = np.flatnonzero(values > 0)
        if pos.size == 0:
            raise NotBistable("f never becomes positive on (0, 1]")
        i = pos[0]
        theta = self._bisect(scan[i], scan[i + 1])
        neg = np.flatnonzero(values[i:] <= 0)
        if neg.size == 0:
            raise NotBistable("f(1) > 0: no upper stable root in (0, 1]")
        j = i + neg[0]
        if values[j] == 0.0 and j == values.size - 1:
            theta_plus = 1.0
        else:
            theta_plus = self._bisect(scan[j], scan[j + 1])
        return theta, theta_plus

    def _bisect(self, lo, hi):
        try:
            return float(brentq(lambda x: float(self.f(x)), lo, hi, xtol=ROOT_XTOL))
        except ValueError as exc:
            raise RootBracketingFailed(f"no sign change of f on [{lo}, {hi}]") from exc

    def f(self, p):
        """Reaction rate, vectorised, without domain checks."""
        return self._num(p) / self._den(p)

    def f_prime(self, p):
        q = self._den(p)
        return (self._dnum(p) * q - self._num(p) * self._dden(p)) / q**2

    def f_second(self, p):
        q = self._den(p)
        dq = self._dden(p)
        top = self._dnum(p) * q - self._num(p) * dq
        dtop = self._ddnum(p) * q - self._num(p) * self._ddden(p)
        return (dtop * q - 2.0 * dq * top) / q**3

    def F(self, p):
        """Antiderivative of ``f`` vanishing at 0 (table plus local panel)."""
        p = np.asarray(p, dtype=float)
        i = np.clip(np.floor(p / self._h).astype(int), 0, self._table.size - 2)
        base = self._nodes[i]
        return self._table[i] + gauss_legendre(self.f, base, p, order=16)

    def increment(self, a, b):
        """``F(b) - F(a)`` without cancellation for nearby arguments."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        direct = gauss_legendre(self.f, a, b, order=16)
        wide = np.abs(b - a) > _NARROW
        if np.any(wide):
            direct = np.where(wide, self.F(b) - self.F(a), direct)
        return direct

    def drop(self, top, width):
        """``F(top) - F(top - width)`` with the width carried exactly.

        Passing the width rather than the lower end keeps full relative
        accuracy when ``width`` is far below the spacing of floats near
        ``top``.
        """
        top = np.asarray(top, dtype=float)
        width = np.asarray(width, dtype=float)
        x, w = legendre_rule(16)
        half = 0.5 * width
        nodes = top[..., None] - half[..., None] * (1.0 + x)
        direct = half * np.sum(self.f(nodes) * w, axis=-1)
        wide = width > _NARROW
        if np.any(wide):
            direct = np.where(wide, self.F(top) - self.F(top - width), direct)
        return direct

    def deviation(self, top: float, u):
        """``f(top - u) - f(top)`` for scalar ``top``, free of cancellation.

        The numerator ``N(top-u) Q(top) - N(top) Q(top-u)`` is expanded in
        ``u``; its constant term vanishes identically and is dropped.
        """
        top = float(top)
        shift = Polynomial([top, -1.0])
        m = self._den(top) * self._num(shift) - self._num(top) * self._den(shift)
        quotient = Polynomial(m.coef[1:]) if m.coef.size > 1 else Polynomial([0.0])
        u = np.asarray(u, dtype=float)
        return u * quotient(u) / (self._den(top - u) * self._den(top))

    def max_abs_f_prime(self, samples: int = 4097) -> float:
        grid = np.linspace(0.0, self.theta_plus, samples)
        return float(np.max(np.abs(self.f_prime(grid))))

    def __repr__(self):
        return (f"ReactionCurve(theta={self.theta:.6g}, theta_c={self.theta_c:.6g}, "
                f"theta_plus={self.theta_plus:.6g})")


def build_reaction(params: ReactionParams | None = None) -> ReactionCurve:
    """Reaction curve of the Wolbachia frequency model for ``params``."""
    params = ReactionParams() if params is None else params
    num, den = params.polynomials()
    return ReactionCurve(num, den, params)


def _check_domain(curve: ReactionCurve, p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > curve.theta_plus) or np.any(~np.isfinite(p)):
        raise DomainError(f"frequency outside [0, {curve.theta_plus}]")
    return p


def eval_f(curve: ReactionCurve, p):
    """Checked evaluation of the reaction rate on [0, theta_plus]."""
    p = _check_domain(curve, p)
    if np.any(curve._den(p) <= 0):
        raise SingularDenominator("denominator of f vanished")
    return curve.f(p)


def eval_F(curve: ReactionCurve, p):
    """Checked evaluation of the antiderivative on [0, theta_plus]."""
    return curve.F(_check_domain(curve, p))


def find_theta_c(curve: ReactionCurve) -> float:
    return curve.theta_c


def sample_profiles(curve: ReactionCurve, n: int = 201):
    """Uniform samples ``(p, f(p), F(p))`` on [0, theta_plus]."""
    p = np.linspace(0.0, curve.theta_plus, n)
    return p, curve.f(p), curve.F(p)
