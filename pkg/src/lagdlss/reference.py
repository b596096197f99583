"""Semi-implicit Eulerian finite-difference reference scheme.

On N equal cells with mirrored ghost values (homogeneous Neumann),

    (u^{n+1} - u^n)/tau = -D2(u^n D2 ln u^{n+1}),

solved by Newton in v = ln u^{n+1}, which keeps every iterate positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import PositivityLoss
from .grid import Domain, PiecewiseLinear


@dataclass(frozen=True, eq=False)
class EulerianField:
    """Cell values u_j > 0 on N equal cells of [a, b]."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need at least two cells")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise PositivityLoss("field values must be finite and positive")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.domain.length / self.N

    @property
    def edges(self) -> np.ndarray:
        e = self.domain.a + self.h * np.arange(self.N + 1)
        e[-1] = self.domain.b
        return e

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    def mass(self) -> float:
        return math.fsum(self.values) * self.h

    def entropy(self) -> float:
        """h sum u ln u - M ln(M/(b-a)) with M the current mass."""
        M = self.mass()
        return math.fsum(self.values * np.log(self.values)) * self.h - M * math.log(M / self.domain.length)

    def as_piecewise(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.edges, self.values, self.values)

    @classmethod
    def from_cdf(cls, domain: Domain, cdf, N: int) -> "EulerianField":
        """Exact cell averages from a cumulative distribution function."""
        e = domain.a + domain.length * np.arange(N + 1) / N
        e[-1] = domain.b
        c = np.asarray(cdf(e), dtype=float)
        return cls(domain, np.diff(c) / np.diff(e))

    @classmethod
    def sample(cls, domain: Domain, density, N: int) -> "EulerianField":
        """Midpoint samples of a density."""
        e = domain.a + domain.length * (np.arange(N) + 0.5) / N
        return cls(domain, density(e))


def laplacian(v: np.ndarray, h: float) -> np.ndarray:
    """Three-point second difference with mirrored ghost cells."""
    ext = np.concatenate([v[:1], v, v[-1:]])
    return (ext[:-2] - 2.0 * ext[1:-1] + ext[2:]) / (h * h)


def _laplacian_bands(N: int, h: float):
    main = np.full(N, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(N - 1)
    return main / (h * h), off / (h * h)


def _product_bands(u: np.ndarray, h: float):
    """Bands (main, super1, super2) of D2 diag(u) D2."""
    N = u.size
    m, o = _laplacian_bands(N, h)
    main = m * m * u
    main[1:] += o * o * u[:-1]
    main[:-1] += o * o * u[1:]
    s1 = o * (m[:-1] * u[:-1] + m[1:] * u[1:])
    s2 = o[:-1] * o[1:] * u[1:-1]
    return main, s1, s2


def _banded(main, s1, s2) -> np.ndarray:
    N = main.size
    ab = np.zeros((5, N))
    ab[2] = main
    ab[1, 1:] = s1
    ab[3, :-1] = s1
    ab[0, 2:] = s2
    ab[4, :-2] = s2
    return ab


def semi_implicit_step(
    u_prev: EulerianField,
    tau: float,
    tol: float = 1e-14,
    max_iters: int = 50,
) -> EulerianField:
    """One step of the semi-implicit scheme; raises PositivityLoss when Newton fails."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    u = u_prev.values
    h = u_prev.h
    scale = float(np.max(u))
    main, s1, s2 = _product_bands(u, h)
    v = np.log(u)
    vmax = math.log(scale) + 60.0

    def G(v):
        return (np.exp(v) - u) + tau * laplacian(u * laplacian(v, h), h)

    g = G(v)
    ng = float(np.max(np.abs(g)))
    for it in range(max_iters):
        if ng <= tol * scale:
            return EulerianField(u_prev.domain, np.exp(v))
        ab = _banded(np.exp(v) + tau * main, tau * s1, tau * s2)
        dv = solve_banded((2, 2), ab, -g, check_finite=False)
        if not np.all(np.isfinite(dv)):
            raise PositivityLoss(f"non-finite Newton update at iteration {it}")
        s = 1.0
        while s > 1e-6:
            vn = v + s * dv
            if np.max(vn) < vmax:
                gn = G(vn)
                nn = float(np.max(np.abs(gn)))
                if nn < (1.0 - 1e-4 * s) * ng:
                    break
            s *= 0.5
        else:
            if np.max(np.abs(dv)) < 1e-13:
                return EulerianField(u_prev.domain, np.exp(v))
            raise PositivityLoss(f"Newton in log variables stalled at iteration {it} (|G|={ng:.3e})")
        v, g, ng = vn, gn, nn
    raise PositivityLoss(f"Newton in log variables did not converge (|G|={ng:.3e})")


@dataclass
class ReferenceTrajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    rejected: int = 0

    @property
    def final(self) -> EulerianField:
        return self.fields[-1]


def run_reference(
    u0: EulerianField,
    t_end: float,
    tau0: float,
    tau_min: float = 1e-18,
    tau_max: float | None = None,
    growth: float = 1.25,
    keep: bool = False,
) -> ReferenceTrajectory:
    """Advance to t_end, halving tau on failure and growing it by ``growth`` otherwise.

    Fields are kept only at the start and the end unless ``keep`` is set.
    """
    if not (tau0 > 0 and t_end >= 0):
        raise ValueError("need tau0 > 0 and t_end >= 0")
    tau_max = tau0 if tau_max is None else tau_max
    traj = ReferenceTrajectory(times=[0.0], fields=[u0])
    u = u0
    taus: list[float] = []
    tau = tau0
    while True:
        t = math.fsum(taus)
        rem = t_end - t
        if rem <= 1e-9 * tau:
            break
        step = rem if rem <= tau * (1 + 1e-9) else tau
        try:
            u_new = semi_implicit_step(u, step)
        except PositivityLoss:
            traj.rejected += 1
            tau = 0.5 * step
            if tau < tau_min:
                raise PositivityLoss(f"time step underflow at t={t:.3e} (tau={tau:.3e})") from None
            continue
        u = u_new
        taus.append(step)
        if keep:
            traj.fields.append(u)
            traj.times.append(math.fsum(taus))
        tau = min(step * growth, tau_max) if step == tau else tau
    if not keep and len(taus) > 0:
        traj.fields.append(u)
        traj.times.append(math.fsum(taus))
    traj.taus = taus
    return traj
