"""Pointwise inequalities for single states and pairs of states."""

from __future__ import annotations

import math

import numpy as np

from ..functionals import fisher, w_delta, wasserstein_exact
from ..grid import LagrangianState, MassGrid, density_pc, density_pl, weights
from .estimates import RTOL, EstimateReport


def power_sum(state: LagrangianState, grid: MassGrid, p: float) -> EstimateReport:
    """sum_kappa (delta_kappa / z_kappa)^p <= (b - a)^p for p > 1."""
    if not p > 1:
        raise ValueError("need p > 1")
    w = weights(state, grid)
    lhs = math.fsum((grid.delta_half / w.z) ** p)
    return EstimateReport.compare(f"power_sum_p{p:g}", lhs, state.domain.length ** p)


def weight_bounds(state: LagrangianState, grid: MassGrid) -> list[EstimateReport]:
    """delta_kappa/(b-a) <= z_kappa <= (2 M F)^{1/2} + M/(b-a)."""
    w = weights(state, grid)
    L, M = state.domain.length, state.domain.M
    # lower bound cell by cell: report the smallest margin z - delta/(b-a)
    lo = grid.delta_half / L
    i = int(np.argmin(w.z / lo))
    upper = math.sqrt(2.0 * M * fisher(state, grid)) + M / L
    return [
        EstimateReport.compare("weight_floor", float(lo[i]), float(w.z[i])),
        EstimateReport.compare("weight_cap", float(np.max(w.z)), upper),
    ]


def entropy_interpolation(state: LagrangianState, grid: MassGrid) -> EstimateReport:
    """H(u_bar) <= H(u_hat), the latter in mass space (int ln zhat dxi).

    Only valid on equidistant mass grids; other grids are rejected.
    """
    if not grid.is_uniform:
        raise ValueError("the entropy interpolation inequality needs an equidistant mass grid")
    h_pc = density_pc(state, grid).entropy()
    h_pl = density_pl(state, grid).entropy()
    return EstimateReport.compare("entropy_interpolation", h_pc, h_pl, rtol=0.0)


def holder_sixth(state: LagrangianState, grid: MassGrid, samples: int = 600) -> EstimateReport:
    """Holder-1/6 seminorm of u_hat, sampled densely, against (9/2)^{1/3} |f|_{H1}^{2/3} |f|_{L2}^{1/3}."""
    pl = density_pl(state, grid)
    bp, v = pl.breakpoints, pl.values
    x = np.union1d(bp, np.linspace(bp[0], bp[-1], samples))
    f = pl(x)
    dxm = np.abs(x[:, None] - x[None, :])
    dfm = np.abs(f[:, None] - f[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dxm > 0, dfm / dxm ** (1.0 / 6.0), 0.0)
    semi = float(np.max(q))
    L = np.diff(bp)
    l2sq = math.fsum(L * (v[:-1] ** 2 + v[:-1] * v[1:] + v[1:] ** 2) / 3.0)
    h1sq = l2sq + math.fsum(np.diff(v) ** 2 / L)
    rhs = (4.5) ** (1.0 / 3.0) * h1sq ** (1.0 / 3.0) * l2sq ** (1.0 / 6.0)
    return EstimateReport.compare("holder_sixth", semi, rhs)


def metric_equivalence(state0: LagrangianState, state1: LagrangianState, grid: MassGrid) -> tuple[EstimateReport, EstimateReport]:
    """(1/6) W_delta^2 <= W^2 <= W_delta^2 with W the exact Wasserstein distance."""
    wd2 = w_delta(state0, state1, grid) ** 2
    w2 = wasserstein_exact(density_pc(state0, grid), density_pc(state1, grid)) ** 2
    return (
        EstimateReport.compare("metric_lower", wd2 / 6.0, w2, rtol=RTOL),
        EstimateReport.compare("metric_upper", w2, wd2, rtol=RTOL),
    )
