"""Order fits and convergence studies against self or Eulerian references."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..grid import LagrangianState, MassGrid, density_pc, density_pl, l2_distance, nodal_interpolant


@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit log(error) = slope * log(abscissa) + intercept."""

    abscissae: tuple
    errors: tuple
    slope: float
    intercept: float
    r2: float

    def within(self, lo: float, hi: float) -> bool:
        return bool(lo <= self.slope <= hi)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_order(abscissae: Sequence[float], errors: Sequence[float]) -> OrderFit:
    h = np.asarray(abscissae, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size != e.size:
        raise ValueError("abscissae and errors differ in length")
    if h.size < 3:
        raise ValueError("an order fit needs at least three points")
    if np.any(np.diff(h) >= 0):
        raise ValueError("abscissae must be strictly decreasing")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("errors must be finite and positive")
    x, y = np.log(h), np.log(e)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return OrderFit(tuple(h.tolist()), tuple(e.tolist()), float(slope), float(icpt), r2)


INTERPOLANTS = ("nodal", "double", "pc")


def comparison_function(state: LagrangianState, grid: MassGrid, kind: str = "nodal"):
    """Piecewise-affine density used to compare solutions.

    ``nodal`` interpolates (x_k, z_k) on the primary nodes only, ``double``
    uses the doubled grid x_0, x_{1/2}, x_1, ..., and ``pc`` the cell values.
    """
    if kind == "nodal":
        return nodal_interpolant(state, grid)
    if kind == "double":
        return density_pl(state, grid).as_piecewise()
    if kind == "pc":
        return density_pc(state, grid).as_piecewise()
    raise ValueError(f"unknown interpolant {kind!r}; expected one of {INTERPOLANTS}")


# --- study cells (top-level so that they can run in worker processes) ---------------


@dataclass(frozen=True)
class RunSpec:
    datum: str = "cos16"
    epsilon: float = 1e-3
    K: int = 50
    grid: str = "cdf"  # cdf | uniform | refined
    tau: float = 1e-8
    t_end: float = 5e-6
    adaptive: bool = False
    tau0: float = 1e-13
    growth: float = 1.1
    tau_max: float = 1e-9


def setup(spec: RunSpec):
    from ..data import cdf_adapted_setup, equidistant_nodes, make_datum, refined_nodes, uniform_mass_setup

    datum = make_datum(spec.datum, spec.epsilon)
    if spec.grid == "uniform":
        grid, x0 = uniform_mass_setup(datum, spec.K)
    elif spec.grid == "cdf":
        grid, x0 = cdf_adapted_setup(datum, equidistant_nodes(datum.domain, spec.K))
    elif spec.grid == "refined":
        grid, x0 = cdf_adapted_setup(datum, refined_nodes(spec.K))
    else:
        raise ValueError(f"unknown grid mode {spec.grid!r}")
    return datum, grid, x0


def schedule_for(spec: RunSpec):
    from ..solver import AdaptiveSchedule, FixedSchedule

    if spec.adaptive:
        return AdaptiveSchedule(spec.t_end, spec.tau0, spec.growth, tau_max=spec.tau_max)
    return FixedSchedule(spec.tau, spec.t_end)


def final_state(spec: RunSpec):
    """Run one study cell; returns (x, xi) of the final state."""
    from ..solver import run

    _, grid, x0 = setup(spec)
    traj = run(x0, grid, schedule_for(spec), raise_on_error=True)
    return traj.states[-1].x.copy(), np.array(grid.xi)


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        out = []
        for it in items:
            try:
                out.append(fn(it))
            except Exception as exc:  # noqa: BLE001 - a failed cell is reported, not fatal
                out.append(exc)
        return out
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, it) for it in items]
        out = []
        for f in futs:
            try:
                out.append(f.result())
            except Exception as exc:  # noqa: BLE001
                out.append(exc)
        return out


@dataclass
class StudyResult:
    axis: str
    parameters: list
    errors: list
    fit: OrderFit | None
    interpolant: str
    failures: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def rows(self):
        slope = self.fit.slope if self.fit else math.nan
        return [(p, e, slope) for p, e in zip(self.parameters, self.errors)]

    @property
    def decreasing(self) -> bool:
        e = np.asarray(self.errors, dtype=float)
        return bool(np.all(np.isfinite(e)) and np.all(np.diff(e) < 0))


def _state_from(x, xi, domain):
    return LagrangianState(x, domain), MassGrid(xi)


def _errors_vs(ref_fun, results, domain, interpolant):
    errs, fails = [], {}
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            errs.append(math.nan)
            fails[i] = repr(res)
            continue
        st, g = _state_from(*res, domain)
        errs.append(l2_distance(comparison_function(st, g, interpolant), ref_fun))
    return errs, fails


def _fit_or_none(absc, errs):
    ok = [(h, e) for h, e in zip(absc, errs) if math.isfinite(e) and e > 0]
    if len(ok) < 3:
        return None
    return fit_order([h for h, _ in ok], [e for _, e in ok])


def spatial_study(
    datum: str = "cos16",
    Ks: Sequence[int] = (25, 50, 100, 200),
    K_ref: int = 400,
    tau: float = 1e-8,
    t_end: float = 5e-6,
    grid: str = "cdf",
    interpolant: str = "nodal",
    epsilon: float = 1e-3,
    workers: int = 1,
) -> StudyResult:
    """L2 error at t_end versus a finer self-reference; the fit is in h = 1/K."""
    Ks = sorted(int(k) for k in Ks)
    if not all(k < K_ref for k in Ks):
        raise ValueError("reference K must exceed every study K")
    specs = [RunSpec(datum, epsilon, K, grid, tau, t_end) for K in Ks + [K_ref]]
    results = _pmap(final_state, specs, workers)
    ref = results[-1]
    if isinstance(ref, Exception):
        raise RuntimeError(f"reference run failed: {ref!r}")
    datum_obj, _, _ = setup(specs[0])
    dom = datum_obj.domain
    rs, rg = _state_from(*ref, dom)
    errs, fails = _errors_vs(comparison_function(rs, rg, interpolant), results[:-1], dom, interpolant)
    fit = _fit_or_none([1.0 / K for K in Ks], errs)
    return StudyResult("space", Ks, errs, fit, interpolant, fails, {"K": K_ref, "tau": tau, "t_end": t_end})


def temporal_study(
    datum: str = "cos16",
    K: int = 200,
    taus: Sequence[float] = (1e-5, 5e-6, 1e-6, 5e-7, 1e-7),
    tau_ref: float = 1e-8,
    t_end: float = 1e-5,
    grid: str = "cdf",
    interpolant: str = "nodal",
    epsilon: float = 1e-3,
    workers: int = 1,
) -> StudyResult:
    """L2 error at t_end versus a small-tau self-reference at the same K."""
    taus = sorted((float(t) for t in taus), reverse=True)
    if not all(t > tau_ref for t in taus):
        raise ValueError("reference tau must be below every study tau")
    specs = [RunSpec(datum, epsilon, K, grid, t, t_end) for t in taus + [tau_ref]]
    results = _pmap(final_state, specs, workers)
    ref = results[-1]
    if isinstance(ref, Exception):
        raise RuntimeError(f"reference run failed: {ref!r}")
    datum_obj, _, _ = setup(specs[0])
    dom = datum_obj.domain
    rs, rg = _state_from(*ref, dom)
    errs, fails = _errors_vs(comparison_function(rs, rg, interpolant), results[:-1], dom, interpolant)
    fit = _fit_or_none(taus, errs)
    return StudyResult("time", taus, errs, fit, interpolant, fails, {"K": K, "tau": tau_ref, "t_end": t_end})


def discontinuous_study(
    Ks: Sequence[int] = (25, 50, 100),
    t_end: float = 1e-8,
    ref_cells: int = 800,
    tau0: float = 1e-13,
    growth: float = 1.1,
    tau_max: float = 1e-9,
    ref_tau0: float = 1e-13,
    ref_tau_max: float = 1e-10,
    interpolant: str = "nodal",
    workers: int = 1,
) -> StudyResult:
    """L2 error at t_end against the semi-implicit Eulerian reference."""
    from ..data import discontinuous
    from ..reference import EulerianField, run_reference

    Ks = sorted(int(k) for k in Ks)
    datum = discontinuous()
    if any(k >= ref_cells for k in Ks):
        raise ValueError("the Eulerian reference must be finer than every study K")
    specs = [RunSpec("discontinuous", 0.0, K, "refined", tau0, t_end, True, tau0, growth, tau_max) for K in Ks]
    results = _pmap(final_state, specs, workers)
    u0 = EulerianField.from_cdf(datum.domain, datum.cdf, ref_cells)
    ref = run_reference(u0, t_end, ref_tau0, tau_max=ref_tau_max, growth=1.2)
    errs, fails = _errors_vs(ref.final.as_piecewise(), results, datum.domain, interpolant)
    fit = _fit_or_none([1.0 / K for K in Ks], errs)
    reference = {"cells": ref_cells, "t_end": t_end, "steps": len(ref.taus), "rejected": ref.rejected}
    return StudyResult("discontinuous", Ks, errs, fit, interpolant, fails, reference)
