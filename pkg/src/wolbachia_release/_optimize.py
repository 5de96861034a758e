"""One-dimensional minimisation helpers."""
from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(func, a: float, b: float, tol: float = 1e-8,
                   max_iter: int = 200) -> tuple[float, float]:
    """Minimise a unimodal ``func`` on [a, b]; returns ``(xmin, fmin)``."""
    a, b = min(a, b), max(a, b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc = func(c)
    fd = func(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)
    if fc < fd:
        return c, fc
    return d, fd


def grid_bracket(values) -> tuple[int, int, bool]:
    """Bracket the smallest entry of ``values`` sampled on a grid.

    Returns ``(lo, hi, multiple)`` with ``lo``/``hi`` the neighbouring grid
    indices around the argmin and ``multiple`` set when another strict local
    minimum exists that is not adjacent to it.
    """
    v = np.asarray(values, dtype=float)
    v = np.where(np.isfinite(v), v, np.inf)
    i = int(np.argmin(v))
    lo = max(i - 1, 0)
    hi = min(i + 1, v.size - 1)
    inner = v[1:-1]
    local = np.flatnonzero((inner < v[:-2]) & (inner < v[2:])) + 1
    multiple = bool(np.any(np.abs(local - i) > 1))
    return lo, hi, multiple


def minimize_on_grid(func, grid, tol: float = 1e-8):
    """Coarse grid scan followed by golden-section refinement.

    Returns ``(xmin, fmin, multiple)``; see :func:`grid_bracket`.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.array([func(x) for x in grid])
    lo, hi, multiple = grid_bracket(values)
    x, fx = golden_section(func, grid[lo], grid[hi], tol=tol)
    i = int(np.argmin(values))
    if values[i] < fx:
        x, fx = grid[i], values[i]
    return x, fx, multiple
