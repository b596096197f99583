"""A-priori estimates, dissipation checks and entropy decay along trajectories.

All bounds are proved for equidistant mass grids; trajectories on other grids
are rejected.  Sums over time use the actual step sizes tau_n, and the time
horizon of windowed bounds is t_N, so fixed and adaptive schedules are treated
alike.  H_bar denotes the initial entropy of the trajectory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..solver import Trajectory
from .tv import tv_sqrt_derivative

#: Relative slack admitted by every inequality check.
RTOL = 1e-10


@dataclass(frozen=True)
class EstimateReport:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    detail: str = ""

    @classmethod
    def compare(cls, name: str, lhs: float, rhs: float, detail: str = "", rtol: float = RTOL) -> "EstimateReport":
        ok = bool(lhs <= rhs * (1.0 + rtol)) if math.isfinite(lhs) else False
        return cls(name, float(lhs), float(rhs), ok, float(rhs - lhs), detail)

    def to_dict(self) -> dict:
        return asdict(self)


def _worst(name: str, lhs: np.ndarray, rhs: np.ndarray, label: str = "N") -> EstimateReport:
    """Report the index with the largest lhs/rhs ratio of a family of inequalities."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    i = int(np.argmax(ratio)) if ratio.size else 0
    if not ratio.size:
        return EstimateReport.compare(name, 0.0, 0.0, "empty")
    return EstimateReport.compare(name, lhs[i], rhs[i], f"worst at {label}={i + 1} of {ratio.size}")


def _require_uniform(traj: Trajectory) -> float:
    if not traj.grid.is_uniform:
        raise ValueError(
            "a-priori estimates are only established for equidistant mass grids; "
            "got a non-uniform grid"
        )
    return traj.grid.delta


def _z_arrays(traj: Trajectory) -> np.ndarray:
    X = traj.nodes
    a, b = traj.domain.a, traj.domain.b
    N = X.shape[0]
    full = np.hstack([np.full((N, 1), a), X, np.full((N, 1), b)])
    return traj.grid.delta_half[None, :] / np.diff(full, axis=1)


def step_quantities(traj: Trajectory) -> dict:
    """Per-state sums entering the estimates (index 0 is the initial state)."""
    d = _require_uniform(traj)
    Z = _z_arrays(traj)
    ze = np.hstack([Z[:, :1], Z, Z[:, -1:]])
    d2 = (ze[:, 2:] - 2.0 * Z + ze[:, :-2]) / d ** 2
    dz = np.diff(Z, axis=1) / d
    up = Z[:, 1:] / Z[:, :-1]
    dn = Z[:, :-1] / Z[:, 1:]
    return {
        "entropy_dissipation": d * np.sum(Z ** 2 * d2 ** 2, axis=1),
        "l4": d * np.sum(dz ** 4, axis=1),
        "osc4": d * np.sum((up - 1.0) ** 4 + (dn - 1.0) ** 4, axis=1),
        "osc2": d * np.sum((up - 1.0) ** 2 + (dn - 1.0) ** 2, axis=1),
    }


def check_dissipation_estimates(traj: Trajectory) -> list[EstimateReport]:
    """Every a-priori estimate of the scheme, evaluated with exact left-hand sides."""
    d = _require_uniform(traj)
    L = traj.domain.length
    M = traj.domain.M
    F = traj.fishers
    H = traj.entropies
    F0, H0 = F[0], H[0]
    taus = traj.taus
    t = traj.times
    X = traj.nodes
    dint = traj.grid.delta_int
    q = step_quantities(traj)
    out: list[EstimateReport] = []

    # Fisher information never exceeds its initial value.
    out.append(_worst("fisher_bounded_by_initial", F[1:], np.full(F.size - 1, F0), "n"))

    # ||x^m - x^n||_delta^2 <= 2 F0 (t_m - t_n) over all pairs m > n.
    worst = (0.0, 0.0, 0, 0)
    worst_ratio = -1.0
    for n in range(X.shape[0] - 1):
        diff = X[n + 1:] - X[n]
        lhs = np.sum(dint * diff * diff, axis=1)
        rhs = 2.0 * F0 * (t[n + 1:] - t[n])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        j = int(np.argmax(ratio))
        if ratio[j] > worst_ratio:
            worst_ratio = ratio[j]
            worst = (lhs[j], rhs[j], n, n + 1 + j)
    out.append(EstimateReport.compare(
        "displacement_holder", worst[0], worst[1], f"worst pair (n, m)=({worst[2]}, {worst[3]})"))

    # sum_n tau_n ||(x^n - x^{n-1})/tau_n||_delta^2 <= 2 F0.
    if taus.size:
        dx = np.diff(X, axis=0) / taus[:, None]
        kin = math.fsum(taus * np.sum(dint * dx * dx, axis=1))
    else:
        kin = 0.0
    out.append(EstimateReport.compare("kinetic_energy", kin, 2.0 * F0))

    def tsum(v):
        return math.fsum(taus * v[1:]) if taus.size else 0.0

    out.append(EstimateReport.compare("entropy_dissipation", tsum(q["entropy_dissipation"]), H0))
    out.append(EstimateReport.compare("gradient_l4", tsum(q["l4"]), 9.0 * H0))
    out.append(EstimateReport.compare("ratio_oscillation_quartic", tsum(q["osc4"]), 18.0 * L ** 4 * H0))

    # Windowed quadratic oscillation at every N with horizon t_N.
    cum2 = np.cumsum(taus * q["osc2"][1:]) if taus.size else np.zeros(0)
    rhs2 = 6.0 * L ** 2 * np.sqrt(t[1:] * H0 * d)
    out.append(_worst("ratio_oscillation_quadratic", cum2, rhs2))

    tv = np.array([tv_sqrt_derivative(s, traj.grid) for s in traj.states[1:]])
    out.append(EstimateReport.compare("tv_sqrt_gradient", math.fsum(taus * tv ** 2) if taus.size else 0.0, 10.0 * L * H0))

    # F(x^N) <= (3/2) (M H0)^{1/2} t_N^{-1/2} at every N.
    rhs_f = 1.5 * np.sqrt(M * H0) / np.sqrt(t[1:]) if taus.size else np.zeros(0)
    out.append(_worst("fisher_decay", F[1:], rhs_f))
    return out


def check_structure(traj: Trajectory, rtol: float = RTOL) -> list[EstimateReport]:
    """Monotone states, exact mass and step-wise dissipation of H and F."""
    from ..grid import is_monotone

    M = traj.domain.M
    mono = all(is_monotone(s.x, traj.domain) for s in traj.states)
    Z = _z_arrays(traj)
    widths = traj.grid.delta_half[None, :] / Z
    mass_err = np.max(np.abs(np.sum(Z * widths, axis=1) - M)) / M
    H, F = traj.entropies, traj.fishers
    dH = H[1:] - H[:-1] - rtol * (1.0 + np.abs(H[:-1]))
    dF = F[1:] - F[:-1] - rtol * (1.0 + np.abs(F[:-1]))
    out = [
        EstimateReport("monotone_states", 0.0 if mono else 1.0, 0.0, mono, 0.0 if mono else -1.0),
        EstimateReport.compare("mass_conservation", float(mass_err), 1e-12, rtol=0.0),
        EstimateReport.compare("entropy_nonincreasing", float(np.max(dH, initial=-np.inf)) if dH.size else 0.0, 0.0, rtol=0.0),
        EstimateReport.compare("fisher_nonincreasing", float(np.max(dF, initial=-np.inf)) if dF.size else 0.0, 0.0, rtol=0.0),
    ]
    return out


def decay_constant(length: float) -> float:
    """pi^2 / (5 (b-a)^4), the proven per-step entropy contraction rate."""
    return math.pi ** 2 / (5.0 * length ** 4)


def check_entropy_decay_steps(traj: Trajectory) -> EstimateReport:
    """(1 + c tau_n) H(x^n) <= H(x^{n-1}) for every step."""
    c = decay_constant(traj.domain.length)
    H = traj.entropies
    lhs = (1.0 + c * traj.taus) * H[1:]
    return _worst("entropy_step_contraction", lhs, H[:-1], "n")


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r2: float
    proven_rate: float
    degenerate: bool
    hitting_step: int | None
    steps_ok: bool


def entropy_decay_fit(traj: Trajectory, floor: float = 1e-12) -> DecayFit:
    """Least-squares slope of ln H versus t over the steps with H above ``floor``."""
    H = traj.entropies
    t = traj.times
    c = decay_constant(traj.domain.length)
    hit = np.nonzero(H <= floor)[0]
    keep = H > floor
    steps_ok = check_entropy_decay_steps(traj).satisfied if traj.reports else True
    if keep.sum() < 2 or H[0] <= floor:
        return DecayFit(math.nan, math.nan, c, True, int(hit[0]) if hit.size else 0, steps_ok)
    tt, y = t[keep], np.log(H[keep])
    A = np.vstack([tt, np.ones_like(tt)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-coef[0]), r2, c, False, int(hit[0]) if hit.size else None, steps_ok)
