"""Discrete entropy and Fisher information with exact derivatives.

Both functionals are written in terms of the cell widths h_j = x_{j+1} - x_j
(0-based, j = 0..K-1, with x_0 = a and x_K = b).  Since h is affine in the
interior nodes, every x-derivative is a pull-back through the difference
operator A with (A v)_j = v_j - v_{j-1} and (A^T w)_p = w_p - w_{p+1}.

Gradients named ``*_gradient`` without qualification follow the conventions

* ``entropy_gradient``: the partial derivative d H / d x_k,
* ``fisher_gradient``: the metric gradient (d F / d x_k) / delta_k,

so that the scheme reads (x - x_prev)/tau = -fisher_gradient(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .grid import DensityPC, LagrangianState, MassGrid, PiecewiseLinear, l2_distance


def _check(state: LagrangianState, grid: MassGrid) -> None:
    if state.K != grid.K:
        raise GridMismatchError(f"state has K={state.K}, grid has K={grid.K}")
    if not np.isclose(state.domain.M, grid.M, rtol=1e-12, atol=0.0):
        raise GridMismatchError(f"domain mass {state.domain.M} != grid mass {grid.M}")


def _widths(x: np.ndarray, a: float, b: float) -> np.ndarray:
    h = np.empty(x.size + 1)
    h[0] = x[0] - a
    h[1:-1] = np.diff(x)
    h[-1] = b - x[-1]
    return h


def _pullback(w: np.ndarray) -> np.ndarray:
    """A^T w for a vector w indexed by cells."""
    return w[:-1] - w[1:]


@dataclass(frozen=True)
class SymBanded:
    """Symmetric banded matrix stored by its diagonal and upper super-diagonals."""

    diagonals: tuple  # (main, first super, second super, ...)

    @property
    def n(self) -> int:
        return self.diagonals[0].size

    @property
    def bandwidth(self) -> int:
        return len(self.diagonals) - 1

    def to_dense(self) -> np.ndarray:
        n = self.n
        out = np.diag(self.diagonals[0]).astype(float)
        for k, d in enumerate(self.diagonals[1:], start=1):
            if n > k:
                out += np.diag(d[: n - k], k) + np.diag(d[: n - k], -k)
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        n = self.n
        out = self.diagonals[0] * v
        for k, d in enumerate(self.diagonals[1:], start=1):
            if n > k:
                dk = d[: n - k]
                out[:-k] += dk * v[k:]
                out[k:] += dk * v[:-k]
        return out

    def with_diagonal_added(self, extra: np.ndarray) -> "SymBanded":
        return SymBanded((self.diagonals[0] + extra,) + tuple(self.diagonals[1:]))

    def solve_banded_form(self, width: int | None = None) -> np.ndarray:
        """Matrix in the (l, u) = (w, w) layout expected by scipy.linalg.solve_banded."""
        w = self.bandwidth if width is None else width
        n = self.n
        ab = np.zeros((2 * w + 1, n))
        for k in range(w + 1):
            if k > self.bandwidth or n <= k:
                continue
            d = self.diagonals[k][: n - k]
            ab[w - k, k:] = d
            ab[w + k, : n - k] = d
        return ab


def _pullback_tridiagonal(d: np.ndarray, e: np.ndarray) -> SymBanded:
    """A^T T A for T symmetric tridiagonal with diagonal d (K) and off-diagonal e (K-1)."""
    n = d.size - 1
    e_ext = np.concatenate([e, [0.0]])  # e_ext[p+1] = 0 at the last node
    main = d[:-1] + d[1:] - 2.0 * e
    off1 = np.zeros(n)
    off1[: n - 1] = e[: n - 1] - d[1:-1] + e_ext[1:n]
    off2 = np.zeros(n)
    off2[: n - 2] = -e[1 : n - 1] if n > 2 else off2[:0]
    return SymBanded((main, off1, off2))


class MetricWorkspace:
    """The weighted inner product <v, w>_delta = sum_k delta_k v_k w_k."""

    def __init__(self, grid: MassGrid):
        self.grid = grid
        self.delta = grid.delta_int

    def inner(self, v, w) -> float:
        return math.fsum(self.delta * np.asarray(v) * np.asarray(w))

    def norm(self, v) -> float:
        return math.sqrt(self.inner(v, v))

    def metric_gradient(self, partial) -> np.ndarray:
        """Convert a partial derivative into the delta-metric gradient."""
        return np.asarray(partial) / self.delta


# --- array kernels -----------------------------------------------------------


def entropy_from_widths(h: np.ndarray, grid: MassGrid, length: float) -> float:
    dh = grid.delta_half
    z = dh / h
    return math.fsum(dh * np.log(z)) - grid.M * math.log(grid.M / length)


def fisher_from_widths(h: np.ndarray, grid: MassGrid) -> float:
    z = grid.delta_half / h
    dz = np.diff(z)
    return 0.5 * math.fsum(dz * dz / grid.delta_int)


def fisher_partial_from_widths(h: np.ndarray, grid: MassGrid) -> np.ndarray:
    """dF/dx for interior nodes."""
    dh = grid.delta_half
    z = dh / h
    g = np.diff(z) / grid.delta_int
    q = np.concatenate([[0.0], g]) - np.concatenate([g, [0.0]])
    return _pullback(q * (-z * z / dh))


def fisher_hessian_from_widths(h: np.ndarray, grid: MassGrid) -> SymBanded:
    dh = grid.delta_half
    z = dh / h
    zp = -z * z / dh
    zpp = 2.0 * z ** 3 / (dh * dh)
    winv = 1.0 / grid.delta_int
    g = np.diff(z) * winv
    q = np.concatenate([[0.0], g]) - np.concatenate([g, [0.0]])
    Ldiag = np.concatenate([[0.0], winv]) + np.concatenate([winv, [0.0]])
    d = zp * zp * Ldiag + q * zpp
    e = zp[:-1] * zp[1:] * (-winv)
    return _pullback_tridiagonal(d, e)


# --- public API ---------------------------------------------------------------


def entropy(state: LagrangianState, grid: MassGrid) -> float:
    """H = sum_kappa delta_kappa ln z_kappa - M ln(M/(b-a))."""
    _check(state, grid)
    return entropy_from_widths(state.widths, grid, state.domain.length)


def entropy_gradient(state: LagrangianState, grid: MassGrid) -> np.ndarray:
    """dH/dx_k = z_{k+1/2} - z_{k-1/2}."""
    _check(state, grid)
    z = grid.delta_half / state.widths
    return np.diff(z)


def entropy_metric_gradient(state: LagrangianState, grid: MassGrid) -> np.ndarray:
    return entropy_gradient(state, grid) / grid.delta_int


def entropy_hessian(state: LagrangianState, grid: MassGrid) -> SymBanded:
    """Tridiagonal d^2 H / dx^2, the sum of rank-one terms z_kappa^2/delta_kappa."""
    _check(state, grid)
    z = grid.delta_half / state.widths
    c = z * z / grid.delta_half
    n = grid.K - 1
    return SymBanded((c[:-1] + c[1:], np.concatenate([-c[1:-1], [0.0]])[:n]))


def fisher(state: LagrangianState, grid: MassGrid) -> float:
    """F = (1/2) sum_k delta_k ((z_{k+1/2} - z_{k-1/2}) / delta_k)^2."""
    _check(state, grid)
    return fisher_from_widths(state.widths, grid)


def fisher_partial(state: LagrangianState, grid: MassGrid) -> np.ndarray:
    """Plain partial derivative dF/dx_k."""
    _check(state, grid)
    return fisher_partial_from_widths(state.widths, grid)


def fisher_gradient(state: LagrangianState, grid: MassGrid) -> np.ndarray:
    """Metric gradient (dF/dx_k)/delta_k.

    On a uniform grid this is
    (z_{k+1/2}^2 (z_{k+3/2} - 2 z_{k+1/2} + z_{k-1/2})
     - z_{k-1/2}^2 (z_{k+1/2} - 2 z_{k-1/2} + z_{k-3/2})) / delta^3
    with ghost values at the two ends.
    """
    return fisher_partial(state, grid) / grid.delta_int


def fisher_hessian(state: LagrangianState, grid: MassGrid) -> SymBanded:
    """Pentadiagonal d^2 F / dx^2 (plain second partials, not metric-scaled)."""
    _check(state, grid)
    return fisher_hessian_from_widths(state.widths, grid)


def w_delta(state0: LagrangianState, state1: LagrangianState, grid: MassGrid) -> float:
    """||x^1 - x^0||_delta."""
    _check(state0, grid)
    _check(state1, grid)
    if state0.domain != state1.domain:
        raise GridMismatchError("states live on different domains")
    d = state1.x - state0.x
    return math.sqrt(math.fsum(grid.delta_int * d * d))


def yosida(state: LagrangianState, anchor: LagrangianState, tau: float, grid: MassGrid) -> float:
    """(1/(2 tau)) ||x - y||_delta^2 + F(x)."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return w_delta(state, anchor, grid) ** 2 / (2.0 * tau) + fisher(state, grid)


def inverse_cdf(d: DensityPC) -> PiecewiseLinear:
    """The inverse distribution function of a piecewise-constant density on [0, M]."""
    c = d.cumulative()
    c[-1] = d.M
    return PiecewiseLinear(c, d.breakpoints[:-1], d.breakpoints[1:])


def wasserstein_exact(d0: DensityPC, d1: DensityPC) -> float:
    """L2 distance on [0, M] of the exact inverse distribution functions."""
    if not math.isclose(d0.M, d1.M, rel_tol=1e-10):
        raise GridMismatchError(f"mass mismatch: {d0.M} vs {d1.M}")
    m0, m1 = d0.integral(), d1.integral()
    if not (math.isclose(m0, d0.M, rel_tol=1e-10) and math.isclose(m1, d1.M, rel_tol=1e-10)):
        raise GridMismatchError("density integrals differ from declared mass")
    return l2_distance(inverse_cdf(d0), inverse_cdf(d1))
