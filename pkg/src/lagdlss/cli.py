"""Command-line front end: runs, convergence and consistency studies, re-verification.

Exit status: 0 when every requested check passes, 1 when a check or an order
band fails, 2 on invalid configuration, 3 when the solver fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .data import (
    Datum,
    cdf_adapted_setup,
    constant,
    equidistant_nodes,
    make_datum,
    refined_nodes,
    uniform_mass_setup,
)
from .errors import LagDLSSError, StepError
from .grid import Domain
from .solver import AdaptiveSchedule, FixedSchedule, SolverConfig, Trajectory, run

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

SPACE_BAND = (1.7, 2.3)
TIME_BAND = (0.8, 1.2)

SMOOTH_SNAPSHOTS = (0.0, 1e-6, 1e-5, 1e-4, 1e-3)
STEP_SNAPSHOTS = (0.0,) + tuple(10.0 ** i for i in range(-13, 0, 2))


class ConfigError(ValueError):
    pass


# --- argument parsing ----------------------------------------------------------------


def _float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not finite: {s!r}")
    return v


def _int(s: str) -> int:
    """Integer flag that also accepts scientific notation such as 1e2."""
    v = _float(s)
    if v != int(v):
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    return int(v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(p) for p in s.split(",") if p.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(_int(p) for p in s.split(",") if p.strip())


# --- configuration -------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Fully resolved, deterministic configuration of one run."""

    command: str
    datum: str = "cos16"
    epsilon: float = 1e-3
    density_file: str | None = None
    domain: dict = field(default_factory=dict)
    K: int = 50
    grid: str = "cdf"
    tau: float = 1e-7
    t_end: float = 1e-5
    adaptive: bool = False
    growth: float = 1.1
    tau_max: float | None = None
    snapshots: tuple = ()
    out: str = "."
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.datum == "cos16" and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive for cos16, got {self.epsilon}")
        if self.K < 2:
            raise ConfigError("K must be at least 2")
        if not (self.tau > 0 and self.t_end >= 0):
            raise ConfigError("need tau > 0 and t_end >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if any(s < 0 or s > self.t_end * (1 + 1e-12) for s in self.snapshots):
            raise ConfigError(f"snapshot times must lie in [0, t_end={self.t_end:g}]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snapshots"] = list(self.snapshots)
        return d


def custom_datum(path: str) -> Datum:
    """Density given as two columns (x, u) sampled on [a, b]; linear in between."""
    try:
        arr = np.loadtxt(path, delimiter="," if str(path).endswith(".csv") else None, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read density file {path}: {exc}") from None
    if arr.shape[1] < 2 or arr.shape[0] < 2:
        raise ConfigError("density file needs two columns and at least two rows")
    xs, us = arr[:, 0], arr[:, 1]
    if np.any(np.diff(xs) <= 0) or np.any(us <= 0):
        raise ConfigError("density samples need increasing x and positive values")
    # trapezoid rule is exact for the piecewise-linear density
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (us[1:] + us[:-1]) * np.diff(xs))])

    def density(x):
        return np.interp(x, xs, us)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        d = x - xs[i]
        s = (us[i + 1] - us[i]) / (xs[i + 1] - xs[i])
        return cum[i] + us[i] * d + 0.5 * s * d * d

    dom = Domain(float(xs[0]), float(xs[-1]), float(cum[-1]))
    return Datum("custom", density, dom, tuple(xs[1:-1]), cdf)


def resolve_datum(cfg: ExperimentConfig) -> Datum:
    if cfg.datum == "custom":
        if not cfg.density_file:
            raise ConfigError("--datum custom needs --density-file")
        d = custom_datum(cfg.density_file)
    elif cfg.datum == "constant":
        d = constant(Domain(0.0, 1.0, 1.0))
    else:
        d = make_datum(cfg.datum, cfg.epsilon)
    cfg.domain = io.domain_dict(d.domain)
    return d


def initial_setup(datum: Datum, K: int, grid: str):
    if grid == "uniform":
        return uniform_mass_setup(datum, K)
    if grid == "cdf":
        return cdf_adapted_setup(datum, equidistant_nodes(datum.domain, K))
    if grid == "refined":
        if datum.domain.a != 0.0 or datum.domain.b != 1.0:
            raise ConfigError("refined placement is defined for the unit interval")
        return cdf_adapted_setup(datum, refined_nodes(K))
    raise ConfigError(f"unknown grid mode {grid!r}")


@dataclass
class SnapshotSchedule:
    """Wraps a schedule so that steps land exactly on the requested times."""

    inner: object
    stops: tuple

    @property
    def t_end(self):
        return self.inner.t_end

    def next_tau(self, n, t, last):
        tau = self.inner.next_tau(n, t, last)
        if tau is None:
            return None
        for s in self.stops:
            if s > t * (1 + 1e-12) + 1e-300 and t + tau > s * (1 + 1e-9):
                return s - t
        return tau


def make_schedule(cfg: ExperimentConfig):
    if cfg.adaptive:
        inner = AdaptiveSchedule(cfg.t_end, cfg.tau, cfg.growth, tau_max=cfg.tau_max or math.inf)
    else:
        inner = FixedSchedule(cfg.tau, cfg.t_end)
    stops = tuple(sorted(s for s in cfg.snapshots if s > 0))
    return SnapshotSchedule(inner, stops) if stops else inner


# --- artifacts -----------------------------------------------------------------------


def _up_to(times, t_end: float) -> tuple:
    return tuple(s for s in times if s <= t_end * (1 + 1e-12))


def _tag(t: float) -> str:
    return "0" if t == 0 else f"{t:.6g}".replace("+", "").replace(".", "p")


def write_snapshots(outdir: Path, traj: Trajectory, times: Sequence[float], log_scale: bool = False) -> list[Path]:
    paths = []
    for s in times:
        i = int(np.argmin(np.abs(traj.times - s)))
        if abs(traj.times[i] - s) > 1e-9 * max(s, 1e-300) and s != 0:
            continue  # not reached (run stopped early)
        st = traj.states[i]
        stem = outdir / f"snapshot_t{_tag(s)}"
        io.write_state_csv(f"{stem}.csv", st, traj.grid)
        io.write_state_dat(f"{stem}.dat", st, traj.grid, header=f"t = {traj.times[i]!r}")
        paths.append(Path(f"{stem}.csv"))
        if log_scale:
            rows = [(k, x, z, math.log10(z)) for k, _, x, z in io.state_rows(st, traj.grid)]
            io.write_table(outdir / f"snapshot_log_t{_tag(s)}", ("k", "x", "z", "log10_z"), rows)
    return paths


def write_particles(outdir: Path, traj: Trajectory) -> None:
    """Particle paths: one row per step, columns t, x_0 ... x_K."""
    K = traj.grid.K
    header = ["t"] + [f"x{k}" for k in range(K + 1)]
    rows = [[t] + list(s.nodes) for t, s in zip(traj.times, traj.states)]
    io.write_table(outdir / "particles", header, rows)


def verify_trajectory(traj: Trajectory):
    """All applicable checks; returns (reports, extra info)."""
    from .analysis.estimates import (
        check_dissipation_estimates,
        check_entropy_decay_steps,
        check_structure,
        entropy_decay_fit,
    )

    reports = check_structure(traj)
    reports.append(check_entropy_decay_steps(traj))
    extra = {"uniform_grid": traj.grid.is_uniform, "steps": len(traj.reports)}
    if traj.grid.is_uniform:
        reports += check_dissipation_estimates(traj)
    else:
        extra["estimates_skipped"] = "a-priori estimates are stated for uniform mass grids only"
    fit = entropy_decay_fit(traj)
    extra["entropy_decay"] = asdict(fit)
    return reports, extra


def _prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _write_config(out: Path, cfg: ExperimentConfig) -> None:
    (out / "config.json").write_text(json.dumps(io._clean(cfg.to_dict()), indent=2, allow_nan=False) + "\n")


def _print_reports(reports) -> None:
    for r in reports:
        flag = "ok  " if r.satisfied else "FAIL"
        print(f"  [{flag}] {r.name:32s} lhs={r.lhs:.6e} rhs={r.rhs:.6e}")


def _execute_run(cfg: ExperimentConfig, out: Path, log_scale: bool = False) -> tuple[int, Trajectory | None]:
    datum = resolve_datum(cfg)
    cfg.validate()
    grid, x0 = initial_setup(datum, cfg.K, cfg.grid)
    _write_config(out, cfg)
    traj = run(x0, grid, make_schedule(cfg), SolverConfig())
    io.write_log(out / "log", io.lagrangian_log(traj))
    io.write_trajectory(out / "trajectory.json", traj)
    io.write_restart(out / "restart.json", traj.states[-1], grid, traj.times[-1], len(traj.reports),
                     traj.reports[-1].tau_used if traj.reports else None)
    write_snapshots(out, traj, cfg.snapshots or (0.0, traj.times[-1]), log_scale)
    write_particles(out, traj)
    if traj.error is not None:
        io.write_error(out / "error.json", traj.error, step=traj.error.step, t=float(traj.times[-1]))
        print(f"solver failed: {traj.error}", file=sys.stderr)
        return EXIT_SOLVER, traj
    reports, extra = verify_trajectory(traj)
    io.write_verification(out / "verification.json", reports, extra)
    ok = all(r.satisfied for r in reports)
    print(f"{len(traj.reports)} steps to t={traj.times[-1]:.6e}; checks {'passed' if ok else 'FAILED'}")
    _print_reports(reports)
    return (EXIT_OK if ok else EXIT_CHECK), traj


# --- subcommands ---------------------------------------------------------------------


def cmd_run(args) -> int:
    out = _prepare_out(args.out)
    cfg = ExperimentConfig(
        "run", args.datum, args.epsilon, args.density_file, {}, args.K, args.grid, args.tau, args.t_end,
        args.adaptive, args.growth, args.tau_max,
        tuple(args.snapshots) if args.snapshots is not None else _up_to(SMOOTH_SNAPSHOTS, args.t_end),
        str(out), args.threads,
    )
    status, _ = _execute_run(cfg, out)
    return status


def _band(axis: str):
    return SPACE_BAND if axis == "space" else TIME_BAND


def _report_study(out: Path, res, band, label: str) -> int:
    rows = res.rows()
    io.write_table(out / f"errors_{res.axis}", (label, "error", "slope"), rows)
    summary = {
        "axis": res.axis, "parameters": list(res.parameters), "errors": list(res.errors),
        "interpolant": res.interpolant, "failures": {str(k): v for k, v in res.failures.items()},
        "reference": res.reference, "fit": res.fit.to_dict() if res.fit else None,
        "band": list(band) if band else None, "decreasing": res.decreasing,
    }
    (out / f"study_{res.axis}.json").write_text(json.dumps(io._clean(summary), indent=2, allow_nan=False) + "\n")
    print(f"{label:>10s} {'error':>14s}")
    for p, e, _ in rows:
        print(f"{p:>10g} {e:>14.6e}")
    for i, msg in res.failures.items():
        print(f"  cell {res.parameters[i]} failed: {msg}", file=sys.stderr)
    if res.fit is None:
        print("fewer than three cells succeeded; no order fit", file=sys.stderr)
        return EXIT_SOLVER
    print(f"fitted slope {res.fit.slope:.4f} (R^2 = {res.fit.r2:.5f})")
    if band is None:
        return EXIT_OK
    ok = res.fit.within(*band)
    print(f"acceptance band [{band[0]}, {band[1]}]: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_convergence(args) -> int:
    from .analysis.convergence import spatial_study, temporal_study

    out = _prepare_out(args.out)
    if args.datum not in ("cos16", "discontinuous"):
        raise ConfigError("convergence studies use a built-in datum")
    common = dict(datum=args.datum, grid=args.grid, interpolant=args.interpolant, epsilon=args.epsilon,
                  workers=args.threads)
    if args.axis == "space":
        Ks = args.Ks or (25, 50, 100, 200)
        if len(Ks) < 3:
            raise ConfigError("an order fit needs at least three values of K")
        params = dict(Ks=Ks, K_ref=args.K_ref or 400, tau=args.tau or 1e-8, t_end=args.t_end or 5e-6)
        cfg = {"command": "convergence", "axis": "space", **common, **params}
        (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")
        res = spatial_study(**params, **common)
        return _report_study(out, res, SPACE_BAND, "K")
    taus = args.taus or (1e-5, 5e-6, 1e-6, 5e-7, 1e-7)
    if len(taus) < 3:
        raise ConfigError("an order fit needs at least three values of tau")
    params = dict(K=args.K or 200, taus=taus, tau_ref=args.tau_ref or 1e-8, t_end=args.t_end or 1e-5)
    cfg = {"command": "convergence", "axis": "time", **common, **params}
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")
    res = temporal_study(**params, **common)
    return _report_study(out, res, TIME_BAND, "tau")


def cmd_consistency(args) -> int:
    from .analysis import consistency as cons

    out = _prepare_out(args.out)
    dom = Domain(0.0, 1.0, 1.0)
    maps = {"cosine": cons.CosineMap(dom), "affine": cons.AffineZMap(dom), "stationary": cons.StationaryMap(dom)}
    smap = maps[args.map]
    if args.levels < 3:
        raise ConfigError("an order fit needs at least three refinement levels")
    Ks = tuple(16 * 2 ** i for i in range(args.levels))
    taus = tuple(1e-2 * 2.0 ** -i for i in range(args.levels))
    (out / "config.json").write_text(json.dumps({"command": "consistency", "map": args.map, "Ks": Ks, "taus": taus}, indent=2) + "\n")
    if args.map == "stationary":
        worst = max(cons.defect_norm(smap, cons.consistency_residual(smap, K, tau, 0.0).total)
                    for K in Ks for tau in taus)
        print(f"stationary map: max defect {worst:.3e} over all levels")
        return EXIT_OK if worst <= 1e-13 else EXIT_CHECK
    sp = cons.spatial_order(smap, Ks=Ks)
    rows = [("space", h, e, sp.slope) for h, e in zip(sp.abscissae, sp.errors)]
    ok = sp.within(*SPACE_BAND)
    print(f"spatial order  {sp.slope:.4f}  band {SPACE_BAND}: {'pass' if ok else 'FAIL'}")
    if args.map == "cosine":
        tp = cons.temporal_order(smap, taus=taus)
        rows += [("time", h, e, tp.slope) for h, e in zip(tp.abscissae, tp.errors)]
        tok = tp.within(*TIME_BAND)
        print(f"temporal order {tp.slope:.4f}  band {TIME_BAND}: {'pass' if tok else 'FAIL'}")
        ok = ok and tok
    else:
        print("temporal order: map is time independent, not fitted")
    io.write_table(out / "consistency", ("axis", "step", "defect", "slope"), rows)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_discontinuous(args) -> int:
    from .analysis.convergence import discontinuous_study

    out = _prepare_out(args.out)
    t_end = args.t_end if args.t_end is not None else 1e-9
    snaps = args.snapshots if args.snapshots is not None else _up_to(STEP_SNAPSHOTS, t_end)
    cfg = ExperimentConfig(
        "discontinuous", "discontinuous", 0.0, None, {}, args.K, args.grid, args.tau or 1e-13, t_end,
        True, args.growth, args.tau_max, tuple(snaps), str(out), args.threads,
        extra={"study": not args.no_study, "Ks": list(args.Ks), "error_time": args.error_time,
               "ref_cells": args.ref_cells},
    )
    if not args.no_study and any(k >= args.ref_cells for k in args.Ks):
        raise ConfigError(f"reference grid ({args.ref_cells} cells) must be finer than every K in {args.Ks}")
    status, _ = _execute_run(cfg, out, log_scale=True)
    if args.no_study:
        return status
    res = discontinuous_study(Ks=args.Ks, t_end=args.error_time, ref_cells=args.ref_cells, workers=args.threads)
    st = _report_study(out, res, None, "K")
    print(f"errors decrease monotonically: {res.decreasing}")
    if st == EXIT_OK and not res.decreasing:
        st = EXIT_CHECK
    return max(status, st)


def cmd_verify(args) -> int:
    path = Path(args.trajectory)
    if path.is_dir():
        path = path / "trajectory.json"
    if not path.exists():
        raise ConfigError(f"no stored trajectory at {path}")
    traj = io.read_trajectory(path)
    reports, extra = verify_trajectory(traj)
    out = _prepare_out(args.out) if args.out else path.parent
    io.write_verification(out / "verification.json", reports, extra)
    ok = all(r.satisfied for r in reports)
    print(f"{len(traj.reports)} stored steps; checks {'passed' if ok else 'FAILED'}")
    _print_reports(reports)
    return EXIT_OK if ok else EXIT_CHECK


# --- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagdlss", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="."):
        sp.add_argument("--datum", default="cos16", choices=["cos16", "discontinuous", "constant", "custom"])
        sp.add_argument("--epsilon", type=_float, default=1e-3)
        sp.add_argument("--density-file", default=None, help="two-column (x, u) samples for --datum custom")
        sp.add_argument("--grid", default="cdf", choices=["uniform", "cdf", "refined"])
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--threads", type=_int, default=1)

    r = sub.add_parser("run", help="run one trajectory and verify it")
    common(r, "run")
    r.add_argument("--K", type=_int, default=50)
    r.add_argument("--tau", type=_float, default=1e-7)
    r.add_argument("--t-end", type=_float, default=1e-5)
    r.add_argument("--snapshots", type=_floats, default=None)
    r.add_argument("--adaptive", action="store_true", help="grow tau geometrically from --tau")
    r.add_argument("--growth", type=_float, default=1.1)
    r.add_argument("--tau-max", type=_float, default=None)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convergence", help="spatial or temporal self-convergence study")
    common(c, "convergence")
    c.add_argument("--axis", choices=["space", "time"], default="space")
    c.add_argument("--Ks", type=_ints, default=None)
    c.add_argument("--K", type=_int, default=None, help="grid size of the temporal study")
    c.add_argument("--K-ref", type=_int, default=None)
    c.add_argument("--tau", type=_float, default=None, help="time step of the spatial study")
    c.add_argument("--taus", type=_floats, default=None)
    c.add_argument("--tau-ref", type=_float, default=None)
    c.add_argument("--t-end", type=_float, default=None)
    c.add_argument("--interpolant", choices=["nodal", "double", "pc"], default="nodal")
    c.set_defaults(func=cmd_convergence)

    k = sub.add_parser("consistency", help="consistency orders on a built-in smooth map")
    k.add_argument("--map", choices=["cosine", "affine", "stationary"], default="cosine")
    k.add_argument("--levels", type=_int, default=4)
    k.add_argument("--out", default="consistency")
    k.set_defaults(func=cmd_consistency)

    d = sub.add_parser("discontinuous", help="step-datum run plus error study against the Eulerian reference")
    d.add_argument("--K", type=_int, default=100)
    d.add_argument("--grid", default="refined", choices=["uniform", "cdf", "refined"])
    d.add_argument("--tau", type=_float, default=None, help="initial step of the adaptive schedule")
    d.add_argument("--growth", type=_float, default=1.1)
    d.add_argument("--tau-max", type=_float, default=None)
    d.add_argument("--t-end", type=_float, default=None)
    d.add_argument("--snapshots", type=_floats, default=None)
    d.add_argument("--Ks", type=_ints, default=(25, 50, 100))
    d.add_argument("--error-time", type=_float, default=1e-8)
    d.add_argument("--ref-cells", type=_int, default=800)
    d.add_argument("--no-study", action="store_true")
    d.add_argument("--out", default="discontinuous")
    d.add_argument("--threads", type=_int, default=1)
    d.set_defaults(func=cmd_discontinuous)

    v = sub.add_parser("verify", help="re-run all checks on a stored trajectory")
    v.add_argument("trajectory", help="trajectory.json or a run directory")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = getattr(args, "out", None)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        _error_json(out_dir, exc)
        return EXIT_CONFIG
    except (LagDLSSError, StepError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        _error_json(out_dir, exc)
        return EXIT_SOLVER


def _error_json(out_dir, exc) -> None:
    if not out_dir:
        return
    try:
        p = Path(out_dir)
        if p.is_dir():
            io.write_error(p / "error.json", exc)
    except OSError:
        pass


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
