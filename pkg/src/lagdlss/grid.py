"""Mass-space and physical-space discretization.

A Lagrangian state is the vector of interior nodes x_1 < ... < x_{K-1} of a
piecewise-affine inverse distribution function X: [0, M] -> [a, b] mapping the
fixed mass nodes xi_0 < ... < xi_K onto [a, b].  Cell kappa = j + 1/2 (stored
at 0-based position j) carries mass delta_kappa and the density value

    z_kappa = delta_kappa / (x_{kappa+1/2} - x_{kappa-1/2}).

Ghost values z_{-1/2} = z_{1/2} and z_{K+1/2} = z_{K-1/2} encode the no-flux
boundary conditions; they are produced on demand and never stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatchError, MonotonicityError

#: Node gaps at or below this fraction of (b - a) count as degenerate.
DEGENERACY_RTOL = 1e-14


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Domain:
    """Physical interval [a, b] carrying total mass M."""

    a: float
    b: float
    M: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if not (np.isfinite(self.M) and self.M > 0):
            raise ValueError(f"need M > 0, got M={self.M}")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def entropy_offset(self) -> float:
        """M ln(M/(b-a)), the entropy of the constant density."""
        return self.M * np.log(self.M / self.length)

    def uniform_state_nodes(self, K: int) -> np.ndarray:
        return self.a + self.length * np.arange(1, K) / K


@dataclass(frozen=True, eq=False)
class MassGrid:
    """Partition 0 = xi_0 < xi_1 < ... < xi_K = M of mass space."""

    xi: np.ndarray

    def __post_init__(self):
        xi = _frozen(self.xi)
        if xi.ndim != 1 or xi.size < 3:
            raise ValueError("mass grid needs K >= 2, i.e. at least three nodes")
        if xi[0] != 0.0:
            raise ValueError(f"mass grid must start at 0, got {xi[0]}")
        steps = np.diff(xi)
        if np.any(steps <= 0) or not np.all(np.isfinite(xi)):
            bad = int(np.argmax(steps <= 0)) + 1
            raise ValueError(f"mass nodes not strictly increasing at k={bad}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "_dh", _frozen(steps))
        object.__setattr__(self, "_di", _frozen(0.5 * (xi[2:] - xi[:-2])))

    @property
    def K(self) -> int:
        return self.xi.size - 1

    @property
    def M(self) -> float:
        return float(self.xi[-1])

    @property
    def delta_half(self) -> np.ndarray:
        """Cell masses delta_kappa for kappa = 1/2 .. K-1/2 (length K)."""
        return self._dh

    @property
    def delta_int(self) -> np.ndarray:
        """Dual-cell widths delta_k = (xi_{k+1} - xi_{k-1})/2, k = 1..K-1."""
        return self._di

    @property
    def xi_half(self) -> np.ndarray:
        return 0.5 * (self.xi[1:] + self.xi[:-1])

    @property
    def is_uniform(self) -> bool:
        d = self._dh
        return bool(np.all(np.abs(d - self.M / self.K) <= 1e-12 * (self.M / self.K)))

    @property
    def delta(self) -> float:
        """The common cell mass M/K; only defined for uniform grids."""
        if not self.is_uniform:
            raise ValueError("delta is only defined for uniform mass grids")
        return self.M / self.K

    def __eq__(self, other):
        if not isinstance(other, MassGrid):
            return NotImplemented
        return self.xi.shape == other.xi.shape and bool(np.array_equal(self.xi, other.xi))

    def __hash__(self):
        return hash(self.xi.tobytes())


def uniform_mass_grid(K: int, M: float) -> MassGrid:
    """Equidistant mass grid xi_k = k M / K."""
    if int(K) != K or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K}")
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    xi = np.arange(K + 1) * (M / K)
    xi[-1] = M
    return MassGrid(xi)


def _simpson(f, lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """Composite Simpson with n (even) panels on each interval [lo_i, hi_i].

    The two outer samples are taken a relative 1e-14 inside the interval so a
    jump of the integrand at an endpoint contributes its one-sided limit.
    """
    s = np.linspace(0.0, 1.0, n + 1)
    s[0], s[-1] = 1e-14, 1.0 - 1e-14
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = hi - lo
    pts = lo[:, None] + h[:, None] * s[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    return (vals @ w) * h / (3.0 * n)


def cumulative_mass(
    u0: Callable[[np.ndarray], np.ndarray],
    x_nodes: Sequence[float],
    breakpoints: Sequence[float] = (),
    rtol: float = 1e-10,
    max_panels: int = 1 << 16,
) -> np.ndarray:
    """U(x_k) = int_a^{x_k} u0 for each node, by adaptive composite Simpson.

    The panel count per sub-interval doubles until the Richardson estimate of
    the total quadrature error drops below ``rtol`` times the total mass.
    Known discontinuities of ``u0`` must be passed as ``breakpoints`` so that
    no Simpson panel straddles a jump.
    """
    x = np.asarray(x_nodes, dtype=float)
    inner = [p for p in breakpoints if x[0] < p < x[-1]]
    cuts = np.union1d(x, inner)
    lo, hi = cuts[:-1], cuts[1:]
    n = 2
    coarse = _simpson(u0, lo, hi, n)
    while True:
        fine = _simpson(u0, lo, hi, 2 * n)
        err = np.sum(np.abs(fine - coarse)) / 15.0
        total = np.sum(fine)
        n *= 2
        if err <= rtol * abs(total) or n >= max_panels:
            break
        coarse = fine
    # Richardson-corrected pieces, then accumulate at the requested nodes.
    pieces = fine + (fine - coarse) / 15.0
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    return cum[np.searchsorted(cuts, x)]


def mass_grid_from_cdf(
    u0: Callable[[np.ndarray], np.ndarray],
    x_nodes: Sequence[float],
    breakpoints: Sequence[float] = (),
) -> MassGrid:
    """Mass grid xi_k = U0(x_k) pushing the physical nodes through the CDF of u0.

    With these mass nodes the state x^0 = x_nodes[1:-1] reproduces u0 by cell
    averages.  ``u0`` must be strictly positive.
    """
    x = np.asarray(x_nodes, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("need at least three physical nodes")
    if np.any(np.diff(x) <= 0):
        raise ValueError("physical nodes must be strictly increasing")
    xi = cumulative_mass(u0, x, breakpoints)
    xi = xi - xi[0]
    steps = np.diff(xi)
    if np.any(steps <= 0):
        k = int(np.argmax(steps <= 0)) + 1
        raise ValueError(f"CDF not strictly increasing at k={k}: u0 must be positive")
    return MassGrid(xi)


def check_monotone(x: np.ndarray, domain: Domain) -> None:
    """Raise MonotonicityError unless a < x_1 < ... < x_{K-1} < b (non-degenerate)."""
    nodes = np.concatenate([[domain.a], x, [domain.b]])
    gaps = np.diff(nodes)
    tol = DEGENERACY_RTOL * domain.length
    bad = ~(gaps > tol)
    if np.any(bad):
        k = int(np.argmax(bad)) + 1
        raise MonotonicityError(k, gaps[k - 1])


def is_monotone(x: np.ndarray, domain: Domain) -> bool:
    nodes = np.concatenate([[domain.a], x, [domain.b]])
    return bool(np.all(np.diff(nodes) > DEGENERACY_RTOL * domain.length))


@dataclass(frozen=True, eq=False)
class LagrangianState:
    """Interior nodes of a discrete inverse distribution function."""

    x: np.ndarray
    domain: Domain

    def __post_init__(self):
        x = _frozen(self.x)
        if x.ndim != 1 or x.size < 1:
            raise ValueError("state needs at least one interior node")
        check_monotone(x, self.domain)
        object.__setattr__(self, "x", x)

    @property
    def K(self) -> int:
        return self.x.size + 1

    @property
    def nodes(self) -> np.ndarray:
        """All K+1 nodes including x_0 = a and x_K = b."""
        return np.concatenate([[self.domain.a], self.x, [self.domain.b]])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @classmethod
    def uniform(cls, domain: Domain, K: int) -> "LagrangianState":
        return cls(domain.uniform_state_nodes(K), domain)

    def __eq__(self, other):
        if not isinstance(other, LagrangianState):
            return NotImplemented
        return self.domain == other.domain and bool(np.array_equal(self.x, other.x))

    __hash__ = None


def _require_match(state: LagrangianState, grid: MassGrid) -> None:
    if state.K != grid.K:
        raise GridMismatchError(f"state has K={state.K}, grid has K={grid.K}")
    if not np.isclose(state.domain.M, grid.M, rtol=1e-12, atol=0.0):
        raise GridMismatchError(f"domain mass {state.domain.M} != grid mass {grid.M}")


@dataclass(frozen=True, eq=False)
class Weights:
    """Cell density values z_{1/2}, ..., z_{K-1/2}."""

    z: np.ndarray
    grid: MassGrid

    def __post_init__(self):
        object.__setattr__(self, "z", _frozen(self.z))

    def __getitem__(self, j: int) -> float:
        """Value at 0-based cell j, i.e. kappa = j + 1/2; j = -1 and j = K are ghosts."""
        K = self.z.size
        if j == -1:
            return float(self.z[0])
        if j == K:
            return float(self.z[-1])
        if not 0 <= j < K:
            raise IndexError(j)
        return float(self.z[j])

    @property
    def extended(self) -> np.ndarray:
        """(z_{-1/2}, z_{1/2}, ..., z_{K-1/2}, z_{K+1/2}) with ghost values."""
        return np.concatenate([self.z[:1], self.z, self.z[-1:]])

    @property
    def nodal(self) -> np.ndarray:
        """Values z_k = zhat(xi_k) for k = 0..K of the piecewise affine interpolant.

        On uniform grids the interior values are the plain averages
        (z_{k-1/2} + z_{k+1/2})/2.
        """
        d = self.grid.delta_half
        w_left = d[1:] / (d[1:] + d[:-1])
        inner = w_left * self.z[:-1] + (1.0 - w_left) * self.z[1:]
        return np.concatenate([self.z[:1], inner, self.z[-1:]])


def weights(state: LagrangianState, grid: MassGrid) -> Weights:
    """z_kappa = delta_kappa / (x_{kappa+1/2} - x_{kappa-1/2})."""
    _require_match(state, grid)
    return Weights(grid.delta_half / state.widths, grid)


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Function on [a, b] that is affine on each segment, possibly discontinuous.

    Segment i spans [x[i], x[i+1]] with end values left[i] -> right[i].
    """

    x: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        for name in ("x", "left", "right"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.left.size != self.x.size - 1 or self.right.size != self.x.size - 1:
            raise ValueError("need one (left, right) pair per segment")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, self.left.size - 1)
        h = self.x[i + 1] - self.x[i]
        s = np.where(h > 0, (t - self.x[i]) / np.where(h > 0, h, 1.0), 0.0)
        return self.left[i] + s * (self.right[i] - self.left[i])

    @property
    def slopes(self) -> np.ndarray:
        return (self.right - self.left) / np.diff(self.x)

    def integral(self) -> float:
        return float(np.sum(0.5 * (self.left + self.right) * np.diff(self.x)))

    def entropy_integral(self) -> float:
        """Closed-form int u ln u over all segments (u > 0)."""
        L = np.diff(self.x)
        return float(np.sum(L * _mean_xlogx(self.left, self.right)))


def _mean_log(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """int_0^1 ln(p(1-s) + q s) ds = (q ln q - p ln p)/(q - p) - 1."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)
    e = (q - p) / (p + q)
    small = np.abs(e) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (q * np.log(q) - p * np.log(p)) / (q - p) - 1.0
    e2 = e * e
    series = np.log(m) - e2 / 6.0 - e2 * e2 / 20.0 - e2 * e2 * e2 / 42.0
    return np.where(small, series, exact)


def _mean_xlogx(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """int_0^1 v ln v ds for v = p(1-s) + q s."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)
    e = (q - p) / (p + q)
    small = np.abs(e) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (q * q * np.log(q) - p * p * np.log(p)) / (2.0 * (q - p)) - 0.5 * m
    # v = m(1 + e r), r in [-1, 1]; expand (1 + e r) ln(m (1 + e r)) in e.
    e2 = e * e
    series = m * (np.log(m) + e2 / 6.0 + e2 * e2 / 60.0 + e2 * e2 * e2 / 210.0)
    return np.where(small, series, exact)


@dataclass(frozen=True, eq=False)
class DensityPC:
    """Piecewise-constant density z_kappa on (x_{kappa-1/2}, x_{kappa+1/2}]."""

    breakpoints: np.ndarray
    values: np.ndarray
    M: float

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _frozen(self.breakpoints))
        object.__setattr__(self, "values", _frozen(self.values))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.breakpoints, t, side="left") - 1, 0, self.values.size - 1)
        return self.values[i]

    def integral(self) -> float:
        return float(np.sum(self.values * np.diff(self.breakpoints)))

    def entropy(self) -> float:
        """int u ln u - M ln(M/(b-a)), integrated cell by cell."""
        L = self.breakpoints[-1] - self.breakpoints[0]
        widths = np.diff(self.breakpoints)
        return float(np.sum(widths * self.values * np.log(self.values)) - self.M * np.log(self.M / L))

    def cumulative(self) -> np.ndarray:
        """Mass to the left of each breakpoint."""
        return np.concatenate([[0.0], np.cumsum(self.values * np.diff(self.breakpoints))])

    def as_piecewise(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.breakpoints, self.values, self.values)


@dataclass(frozen=True, eq=False)
class DensityPL:
    """Continuous piecewise-affine density on the doubled node grid.

    ``xi`` holds the mass coordinates xi_0, xi_{1/2}, xi_1, ..., xi_K of the
    breakpoints, so that zhat = u_hat o X is available in mass space.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        for name in ("breakpoints", "values", "xi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.breakpoints, self.values)

    @property
    def M(self) -> float:
        return float(self.xi[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def as_piecewise(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.breakpoints, self.values[:-1], self.values[1:])

    def integral(self) -> float:
        return self.as_piecewise().integral()

    def entropy(self) -> float:
        """int_0^M ln zhat(xi) dxi - M ln(M/(b-a)), in closed form via log-means."""
        L = self.breakpoints[-1] - self.breakpoints[0]
        m = _mean_log(self.values[:-1], self.values[1:])
        return math.fsum(np.diff(self.xi) * m) - self.M * math.log(self.M / L)

    def entropy_physical(self) -> float:
        """int u_hat ln u_hat dx - M ln(M/(b-a)) over physical space."""
        L = self.breakpoints[-1] - self.breakpoints[0]
        return self.as_piecewise().entropy_integral() - self.M * math.log(self.M / L)


def density_pc(state: LagrangianState, grid: MassGrid) -> DensityPC:
    w = weights(state, grid)
    return DensityPC(state.nodes, w.z, grid.M)


def density_pl(state: LagrangianState, grid: MassGrid) -> DensityPL:
    """Piecewise-affine reconstruction u_hat with u_hat(x_k) = z_k, u_hat(x_kappa) = z_kappa."""
    w = weights(state, grid)
    nodes = state.nodes
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    K = grid.K
    bp = np.empty(2 * K + 1)
    bp[0::2] = nodes
    bp[1::2] = mids
    vals = np.empty(2 * K + 1)
    vals[0::2] = w.nodal
    vals[1::2] = w.z
    xi = np.empty(2 * K + 1)
    xi[0::2] = grid.xi
    xi[1::2] = grid.xi_half
    return DensityPL(bp, vals, xi)


def nodal_interpolant(state: LagrangianState, grid: MassGrid) -> PiecewiseLinear:
    """Linear interpolation of (x_k, z_k), k = 0..K, on the primary nodes only."""
    w = weights(state, grid)
    v = w.nodal
    return PiecewiseLinear(state.nodes, v[:-1], v[1:])


def eval_lagrangian(state: LagrangianState, grid: MassGrid, xi) -> np.ndarray:
    """X(xi) for the piecewise-affine map through (xi_k, x_k)."""
    _require_match(state, grid)
    xi_arr = np.asarray(xi, dtype=float)
    tol = 1e-14 * grid.M
    if np.any(xi_arr < -tol) or np.any(xi_arr > grid.M + tol):
        raise ValueError(f"mass coordinate outside [0, {grid.M}]")
    out = np.interp(np.clip(xi_arr, 0.0, grid.M), grid.xi, state.nodes)
    return out if out.ndim else float(out)


def l2_distance(f: PiecewiseLinear, g: PiecewiseLinear) -> float:
    """Exact L2 distance of two piecewise-affine functions on the merged breakpoints."""
    lo = max(f.x[0], g.x[0])
    hi = min(f.x[-1], g.x[-1])
    pts = np.union1d(f.x, g.x)
    pts = pts[(pts >= lo) & (pts <= hi)]
    mid = 0.5 * (pts[1:] + pts[:-1])
    L = np.diff(pts)
    # Evaluate one-sided limits via the segment containing each merged midpoint.
    def ends(p: PiecewiseLinear):
        i = np.clip(np.searchsorted(p.x, mid, side="right") - 1, 0, p.left.size - 1)
        h = p.x[i + 1] - p.x[i]
        sl = (p.right[i] - p.left[i]) / h
        return p.left[i] + sl * (pts[:-1] - p.x[i]), p.left[i] + sl * (pts[1:] - p.x[i])

    fl, fr = ends(f)
    gl, gr = ends(g)
    dl, dr = fl - gl, fr - gr
    return float(np.sqrt(np.sum(L * (dl * dl + dl * dr + dr * dr) / 3.0)))
