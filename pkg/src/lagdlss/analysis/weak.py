"""Discrete weak-form residual of the limit equation along a trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from ..grid import Domain, density_pl, weights
from ..solver import Trajectory

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class SpatialTest:
    """Polynomial test function rho on [a, b] with rho'(a) = rho'(b) = 0."""

    rho: Polynomial

    def __post_init__(self):
        if not isinstance(self.rho, Polynomial):
            object.__setattr__(self, "rho", Polynomial(self.rho))

    @classmethod
    def neumann(cls, domain: Domain, coeffs=(1.0,), constant: float = 0.0) -> "SpatialTest":
        """rho with rho'(x) = (x - a)(b - x) q(x), q given by ``coeffs`` in powers of x."""
        a, b = domain.a, domain.b
        dr = Polynomial([-a * b, a + b, -1.0]) * Polynomial(coeffs)
        return cls(dr.integ(k=constant))

    @classmethod
    def constant(cls, value: float = 1.0) -> "SpatialTest":
        return cls(Polynomial([value]))

    def check(self, domain: Domain, atol: float = 1e-12) -> None:
        d = self.rho.deriv()
        scale = 1.0 + float(np.max(np.abs(d(np.linspace(domain.a, domain.b, 11)))))
        if abs(d(domain.a)) > atol * scale or abs(d(domain.b)) > atol * scale:
            raise ValueError("spatial test function must satisfy rho'(a) = rho'(b) = 0")


@dataclass(frozen=True)
class TemporalTest:
    """Temporal test function psi with derivative and the end of its support."""

    psi: Callable[[float], float]
    dpsi: Callable[[float], float]
    support_end: float

    @classmethod
    def cosine(cls, T: float) -> "TemporalTest":
        """psi(t) = cos^2(pi t / (2T)) on [0, T], zero afterwards (C^1)."""
        if not T > 0:
            raise ValueError("support end must be positive")
        w = math.pi / (2.0 * T)

        def psi(t):
            return math.cos(w * t) ** 2 if t < T else 0.0

        def dpsi(t):
            return -w * math.sin(2.0 * w * t) if t < T else 0.0

        return cls(psi, dpsi, T)


def _integral_rho_pc(state, grid, R: Polynomial) -> float:
    z = weights(state, grid).z
    return math.fsum(z * np.diff(R(state.nodes)))


def _spatial_terms(state, grid, rho: Polynomial) -> float:
    """int rho''' u_hat' + 4 rho'' (d/dx sqrt(u_hat))^2 dx, exact on every affine piece."""
    pl = density_pl(state, grid)
    bp, v = pl.breakpoints, pl.values
    s = np.diff(v) / np.diff(bp)
    d2 = rho.deriv(2)
    first = math.fsum(s * np.diff(d2(bp)))
    lo, hi = bp[:-1], bp[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    u = v[:-1, None] + s[:, None] * (pts - lo[:, None])
    integrand = d2(pts) * (s[:, None] ** 2) / u  # 4 rho'' (s / (2 sqrt u))^2
    second = math.fsum((integrand @ _GL_W) * half)
    return first + second


def weak_residual(traj: Trajectory, rho: SpatialTest, psi: TemporalTest) -> float:
    """Absolute value of the discrete weak form.

    Time enters through the piecewise-constant interpolant: the psi' term is
    summed exactly as sum_n (psi(t_n) - psi(t_{n-1})) int rho u_bar^n, the
    remaining term by the midpoint rectangle rule on each step.
    """
    rho.check(traj.domain)
    t = traj.times
    if psi.support_end > t[-1] * (1 + 1e-12):
        raise ValueError(
            f"support of psi ends at {psi.support_end:.3e}, beyond the trajectory horizon {t[-1]:.3e}"
        )
    R = rho.rho.integ()
    g = traj.grid
    psis = np.array([psi.psi(float(s)) for s in t])
    terms = [psis[0] * _integral_rho_pc(traj.states[0], g, R)]
    for n in range(1, len(traj.states)):
        st = traj.states[n]
        terms.append((psis[n] - psis[n - 1]) * _integral_rho_pc(st, g, R))
        tau = t[n] - t[n - 1]
        terms.append(tau * psi.psi(0.5 * (t[n] + t[n - 1])) * _spatial_terms(st, g, rho.rho))
    return abs(math.fsum(terms))
