"""Built-in initial data and initial node placements."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, pi
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .grid import Domain, LagrangianState, MassGrid, cumulative_mass, mass_grid_from_cdf, uniform_mass_grid


@dataclass(frozen=True)
class Datum:
    """An initial density on a domain, with its CDF when known in closed form."""

    name: str
    density: Callable[[np.ndarray], np.ndarray]
    domain: Domain
    breakpoints: tuple = ()
    cdf: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def cumulative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.cdf is not None:
            return self.cdf(x)
        pts = np.unique(np.concatenate([[self.domain.a], np.ravel(x)]))
        vals = cumulative_mass(self.density, pts, self.breakpoints)
        return np.interp(x, pts, vals)


def cos16(epsilon: float = 1e-3, a: float = 0.0, b: float = 1.0) -> Datum:
    """u0(x) = epsilon + cos^16(pi x) on [a, b]; the CDF is exact (finite Fourier sum)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    n = 16
    L = b - a
    # cos^16(t) = 2^-16 [C(16,8) + 2 sum_{j<8} C(16,j) cos((16-2j) t)]
    coeffs = [(n - 2 * j, 2.0 * comb(n, j) / 2.0 ** n) for j in range(n // 2)]
    c0 = comb(n, n // 2) / 2.0 ** n

    def density(x):
        return epsilon + np.cos(pi * np.asarray(x, dtype=float)) ** 16

    def cdf(x):
        x = np.asarray(x, dtype=float)
        out = (epsilon + c0) * (x - a)
        for m, c in coeffs:
            out = out + c * (np.sin(m * pi * x) - np.sin(m * pi * a)) / (m * pi)
        return out

    M = float(cdf(np.array(b)))
    return Datum("cos16", density, Domain(a, b, M), (), cdf)


def discontinuous(low: float = 1e-3, high: float = 1.0) -> Datum:
    """Step density: ``high`` on [0,1/3] and [2/3,1], ``low`` in between."""
    j1, j2 = 1.0 / 3.0, 2.0 / 3.0

    def density(x):
        x = np.asarray(x, dtype=float)
        return np.where((x > j1) & (x < j2), low, high)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return (high * np.minimum(x, j1) + low * np.clip(x - j1, 0.0, j2 - j1)
                + high * np.clip(x - j2, 0.0, None))

    M = high * 2.0 / 3.0 + low / 3.0
    return Datum("discontinuous", density, Domain(0.0, 1.0, M), (j1, j2), cdf)


def constant(domain: Domain) -> Datum:
    c = domain.M / domain.length

    def density(x):
        return np.full(np.shape(x), c)

    def cdf(x):
        return c * (np.asarray(x, dtype=float) - domain.a)

    return Datum("constant", density, domain, (), cdf)


def quantile_state(datum: Datum, grid: MassGrid) -> LagrangianState:
    """Nodes x_k = U0^{-1}(xi_k): the cell averages of u0 on a given mass grid."""
    dom = datum.domain
    xs = []
    lo = dom.a
    for target in grid.xi[1:-1]:
        f = lambda s: float(datum.cumulative(np.array(s))) - target
        r = brentq(f, lo, dom.b, xtol=1e-15 * dom.length, rtol=4 * np.finfo(float).eps, maxiter=200)
        xs.append(r)
        lo = r
    return LagrangianState(np.array(xs), dom)


def uniform_mass_setup(datum: Datum, K: int) -> tuple[MassGrid, LagrangianState]:
    """Equidistant mass grid with the initial state placed at the quantiles of u0."""
    grid = uniform_mass_grid(K, datum.domain.M)
    return grid, quantile_state(datum, grid)


def cdf_adapted_setup(datum: Datum, x_nodes) -> tuple[MassGrid, LagrangianState]:
    """Mass grid obtained by pushing the physical nodes through the CDF of u0."""
    x_nodes = np.asarray(x_nodes, dtype=float)
    if datum.cdf is not None:
        xi = datum.cdf(x_nodes) - datum.cdf(np.array(x_nodes[0]))
        xi[-1] = datum.domain.M
        grid = MassGrid(xi)
    else:
        grid = mass_grid_from_cdf(datum.density, x_nodes, datum.breakpoints)
        grid = MassGrid(np.concatenate([grid.xi[:-1], [datum.domain.M]]))
    return grid, LagrangianState(x_nodes[1:-1], datum.domain)


def equidistant_nodes(domain: Domain, K: int) -> np.ndarray:
    x = domain.a + domain.length * np.arange(K + 1) / K
    x[-1] = domain.b
    return x


def _largest_remainder(total: int, weights: np.ndarray, minimum: int = 1) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    base = np.full(w.size, minimum)
    rest = total - base.sum()
    if rest < 0:
        raise ValueError("not enough intervals for the requested segments")
    share = rest * w / w.sum()
    n = np.floor(share).astype(int)
    left = rest - n.sum()
    order = np.argsort(-(share - n), kind="stable")
    n[order[:left]] += 1
    return base + n


def refined_nodes(
    K: int,
    jumps=(1.0 / 3.0, 2.0 / 3.0),
    radius: float = 0.05,
    fraction: float = 0.5,
    ratio: float = 1.15,
    a: float = 0.0,
    b: float = 1.0,
) -> np.ndarray:
    """K+1 physical nodes clustered geometrically around each jump.

    A share ``fraction`` of the K intervals lies inside the windows
    [jump - radius, jump + radius]; in each half-window the widths grow by
    ``ratio`` away from the jump, which is itself a node.  The remaining
    intervals are spread uniformly over the outer segments.
    """
    jumps = sorted(jumps)
    if not (0 < fraction < 1) or ratio < 1:
        raise ValueError("need 0 < fraction < 1 and ratio >= 1")
    edges = [a]
    for j in jumps:
        if not (a + radius < j < b - radius):
            raise ValueError(f"window around {j} leaves the domain")
        edges += [j - radius, j + radius]
    edges.append(b)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("refinement windows overlap")
    n_half = max(1, int(round(fraction * K / (2 * len(jumps)))))
    n_outer = K - 2 * len(jumps) * n_half
    outer_len = np.array([edges[2 * i + 1] - edges[2 * i] for i in range(len(jumps) + 1)])
    counts = _largest_remainder(n_outer, outer_len)

    w = ratio ** np.arange(n_half)
    w = radius * w / w.sum()
    away = np.cumsum(w)  # distances from the jump, last one = radius
    pieces = []
    for i in range(len(jumps) + 1):
        lo, hi = edges[2 * i], edges[2 * i + 1]
        pieces.append(np.linspace(lo, hi, counts[i] + 1)[:-1])
        if i < len(jumps):
            j = jumps[i]
            left = j - away[::-1]  # starts at j - radius
            right = j + away[:-1]
            pieces.append(np.concatenate([left, [j], right]))
    x = np.concatenate(pieces + [[b]])
    x[0], x[-1] = a, b
    assert x.size == K + 1
    return x


def make_datum(name: str, epsilon: float = 1e-3) -> Datum:
    """Built-in datum by name: ``cos16`` or ``discontinuous``."""
    if name == "cos16":
        return cos16(epsilon)
    if name == "discontinuous":
        return discontinuous()
    raise ValueError(f"unknown datum {name!r}; expected 'cos16' or 'discontinuous'")
