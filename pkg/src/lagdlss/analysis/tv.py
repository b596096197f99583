"""Total variation of the derivative of sqrt(u_hat)."""

from __future__ import annotations

import math

import numpy as np

from ..grid import LagrangianState, MassGrid, density_pl, weights


def _pieces(state: LagrangianState, grid: MassGrid):
    pl = density_pl(state, grid)
    bp, v = pl.breakpoints, pl.values
    s = np.diff(v) / np.diff(bp)
    # one-sided values of d/dx sqrt(u_hat) at the left/right end of every piece
    left = s / (2.0 * np.sqrt(v[:-1]))
    right = s / (2.0 * np.sqrt(v[1:]))
    return bp, left, right


def sqrt_gradient(state: LagrangianState, grid: MassGrid, x) -> np.ndarray:
    """d/dx sqrt(u_hat) at x (right limits at breakpoints)."""
    pl = density_pl(state, grid)
    bp, v = pl.breakpoints, pl.values
    x = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, bp.size - 2)
    s = (v[i + 1] - v[i]) / (bp[i + 1] - bp[i])
    u = v[i] + s * (x - bp[i])
    return s / (2.0 * np.sqrt(u))


def tv_sqrt_derivative(state: LagrangianState, grid: MassGrid) -> float:
    """Exact TV of d/dx sqrt(u_hat) on the open interval (a, b).

    The derivative is monotone on each affine piece of u_hat, so the total
    variation is the sum of the within-piece variations plus the jumps at the
    interior breakpoints x_{1/2}, x_1, ..., x_{K-1/2}.
    """
    bp, left, right = _pieces(state, grid)
    inside = np.abs(right - left)
    jumps = np.abs(left[1:] - right[:-1])
    return math.fsum(inside) + math.fsum(jumps)


def sqrt_gradient_jumps(state: LagrangianState, grid: MassGrid) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form jumps of d/dx sqrt(u_hat) on a uniform grid.

    Returns (jumps at x_k for k = 1..K-1, jumps at x_kappa for kappa = 1/2..K-1/2).
    """
    d = grid.delta
    w = weights(state, grid)
    z = w.z
    zk = w.nodal[1:-1]
    at_nodes = (z[:-1] - z[1:]) ** 2 / (2.0 * d * np.sqrt(zk))
    ze = w.extended
    at_mid = 0.5 * np.sqrt(z) * (ze[2:] - 2.0 * z + ze[:-2]) / d
    return at_nodes, at_mid
