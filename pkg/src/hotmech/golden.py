"""Bracketed golden-section search for a scalar maximum."""

from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, a: float, b: float, xtol: float = 1e-10, max_iter: int = 500) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on [a, b].

    Returns:
        (x_best, f_best).
    """
    if not b > a:
        raise ValueError("need a < b")
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= xtol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def scan_then_refine(f, lo: float, hi: float, n_grid: int = 241, xtol: float = 1e-10, seeds=()):
    """Grid scan to find the best bracket, then golden refinement.

    A plain golden search on a wide window can lock onto a flat edge; the
    scan picks the basin first.  ``seeds`` are extra points added to the grid.
    """
    grid = np.union1d(np.linspace(lo, hi, n_grid), [s for s in seeds if lo < s < hi])
    values = np.array([f(x) for x in grid])
    values = np.where(np.isnan(values), -np.inf, values)
    k = int(np.argmax(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]
    if a == b:
        return float(grid[k]), float(values[k])
    x, fx = golden_max(f, a, b, xtol=xtol)
    if fx < values[k]:
        return float(grid[k]), float(values[k])
    return float(x), float(fx)
