"""Serialization of states, trajectory logs, restart files and reports.

Every JSON artifact carries a ``schema`` id and is validated before it is
written.  Restart and trajectory files store floats as hex strings so that a
reload reproduces the arrays bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .grid import Domain, LagrangianState, MassGrid, weights
from .solver import StepReport, Trajectory

STATE_SCHEMA_ID = "lagdlss.state/1"
RESTART_SCHEMA_ID = "lagdlss.restart/1"
LOG_SCHEMA_ID = "lagdlss.trajectory-log/1"
TRAJECTORY_SCHEMA_ID = "lagdlss.trajectory/1"
REPORT_SCHEMA_ID = "lagdlss.verification/1"
ERROR_SCHEMA_ID = "lagdlss.error/1"

SCHEMES = ("lagrangian", "reference")

_num = {"type": "number"}
_hexlist = {"type": "array", "items": {"type": "string"}}
_domain = {
    "type": "object",
    "required": ["a", "b", "M"],
    "properties": {"a": _num, "b": _num, "M": _num},
}

SCHEMAS = {
    STATE_SCHEMA_ID: {
        "type": "object",
        "required": ["schema", "domain", "xi", "x"],
        "properties": {
            "schema": {"const": STATE_SCHEMA_ID},
            "domain": _domain,
            "xi": {"type": "array", "items": _num, "minItems": 2},
            "x": {"type": "array", "items": _num},
            "z": {"type": "array", "items": _num},
        },
    },
    RESTART_SCHEMA_ID: {
        "type": "object",
        "required": ["schema", "domain", "xi", "x", "t", "n"],
        "properties": {
            "schema": {"const": RESTART_SCHEMA_ID},
            "domain": {"type": "object", "required": ["a", "b", "M"]},
            "xi": _hexlist,
            "x": _hexlist,
            "t": {"type": "string"},
            "n": {"type": "integer", "minimum": 0},
            "last_tau": {"type": ["string", "null"]},
        },
    },
    LOG_SCHEMA_ID: {
        "type": "object",
        "required": ["schema", "scheme", "n", "t", "tau", "H", "newton_iters", "residual"],
        "properties": {
            "schema": {"const": LOG_SCHEMA_ID},
            "scheme": {"enum": list(SCHEMES)},
            "n": {"type": "integer", "minimum": 0},
            "t": _num,
            "tau": _num,
            "H": _num,
            "F": {"type": ["number", "null"]},
            "newton_iters": {"type": "integer", "minimum": 0},
            "residual": {"type": ["number", "null"]},
        },
    },
    TRAJECTORY_SCHEMA_ID: {
        "type": "object",
        "required": ["schema", "domain", "xi", "times", "nodes", "reports"],
        "properties": {
            "schema": {"const": TRAJECTORY_SCHEMA_ID},
            "domain": {"type": "object", "required": ["a", "b", "M"]},
            "xi": _hexlist,
            "times": _hexlist,
            "nodes": {"type": "array", "items": _hexlist},
            "reports": {"type": "array", "items": {"type": "object"}},
            "error": {"type": ["string", "null"]},
        },
    },
    REPORT_SCHEMA_ID: {
        "type": "object",
        "required": ["schema", "passed", "reports"],
        "properties": {
            "schema": {"const": REPORT_SCHEMA_ID},
            "passed": {"type": "boolean"},
            "reports": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "lhs", "rhs", "satisfied", "slack"],
                },
            },
        },
    },
    ERROR_SCHEMA_ID: {
        "type": "object",
        "required": ["schema", "error", "message"],
        "properties": {"schema": {"const": ERROR_SCHEMA_ID}, "error": {"type": "string"}, "message": {"type": "string"}},
    },
}


def validate(record: dict) -> dict:
    sid = record.get("schema")
    if sid not in SCHEMAS:
        raise ValueError(f"unknown schema id {sid!r}")
    jsonschema.validate(record, SCHEMAS[sid])
    return record


def _finite_or_none(v):
    """JSON has no NaN/inf; map them to null."""
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite_or_none(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, record: dict) -> Path:
    path = Path(path)
    record = _clean(record)
    validate(record)
    path.write_text(json.dumps(record, indent=2, allow_nan=False) + "\n")
    return path


def read_json(path) -> dict:
    return validate(json.loads(Path(path).read_text()))


def _with_ext(stem, ext: str) -> Path:
    """Append an extension without treating dots inside the stem as one."""
    return Path(f"{stem}{ext}")


def _hex(a) -> list[str]:
    return [float(v).hex() for v in np.ravel(a)]


def _unhex(seq) -> np.ndarray:
    return np.array([float.fromhex(s) for s in seq], dtype=float)


def domain_dict(domain: Domain) -> dict:
    return {"a": domain.a, "b": domain.b, "M": domain.M}


def _domain_exact(domain: Domain) -> dict:
    return {"a": float(domain.a).hex(), "b": float(domain.b).hex(), "M": float(domain.M).hex()}


def _domain_from(d: dict) -> Domain:
    conv = (lambda v: float.fromhex(v)) if isinstance(d["a"], str) else float
    return Domain(conv(d["a"]), conv(d["b"]), conv(d["M"]))


# --- states -------------------------------------------------------------------------


def state_rows(state: LagrangianState, grid: MassGrid):
    """Rows (k, xi_k, x_k, z_k) for the K+1 nodes, z_k the nodal weight."""
    z = weights(state, grid).nodal
    return [(k, float(grid.xi[k]), float(state.nodes[k]), float(z[k])) for k in range(grid.K + 1)]


def write_state_csv(path, state: LagrangianState, grid: MassGrid) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "xi", "x", "z"])
        for k, xi, x, z in state_rows(state, grid):
            w.writerow([k, repr(xi), repr(x), repr(z)])
    return path


def write_state_dat(path, state: LagrangianState, grid: MassGrid, header: str = "") -> Path:
    """Whitespace-separated columns for gnuplot."""
    path = Path(path)
    lines = [f"# {header}".rstrip(), "# k xi x z"]
    lines += [f"{k} {xi!r} {x!r} {z!r}" for k, xi, x, z in state_rows(state, grid)]
    path.write_text("\n".join(lines) + "\n")
    return path


def state_record(state: LagrangianState, grid: MassGrid) -> dict:
    return {
        "schema": STATE_SCHEMA_ID,
        "domain": domain_dict(state.domain),
        "xi": [float(v) for v in grid.xi],
        "x": [float(v) for v in state.x],
        "z": [float(v) for v in weights(state, grid).z],
    }


def write_state_json(path, state: LagrangianState, grid: MassGrid) -> Path:
    return write_json(path, state_record(state, grid))


def read_state_json(path) -> tuple[LagrangianState, MassGrid]:
    rec = read_json(path)
    dom = _domain_from(rec["domain"])
    return LagrangianState(np.array(rec["x"], dtype=float), dom), MassGrid(np.array(rec["xi"], dtype=float))


# --- restart ------------------------------------------------------------------------


def write_restart(path, state: LagrangianState, grid: MassGrid, t: float, n: int, last_tau: float | None = None) -> Path:
    rec = {
        "schema": RESTART_SCHEMA_ID,
        "domain": _domain_exact(state.domain),
        "xi": _hex(grid.xi),
        "x": _hex(state.x),
        "t": float(t).hex(),
        "n": int(n),
        "last_tau": None if last_tau is None else float(last_tau).hex(),
    }
    return write_json(path, rec)


def read_restart(path):
    """Returns (state, grid, t, n, last_tau) exactly as written."""
    rec = read_json(path)
    dom = _domain_from(rec["domain"])
    last = rec.get("last_tau")
    return (
        LagrangianState(_unhex(rec["x"]), dom),
        MassGrid(_unhex(rec["xi"])),
        float.fromhex(rec["t"]),
        int(rec["n"]),
        None if last is None else float.fromhex(last),
    )


# --- trajectory logs ----------------------------------------------------------------

LOG_COLUMNS = ("n", "t", "tau", "H", "F", "newton_iters", "residual", "scheme")


def lagrangian_log(traj: Trajectory) -> list[dict]:
    H, F = traj.entropies, traj.fishers
    recs = [
        {"schema": LOG_SCHEMA_ID, "scheme": "lagrangian", "n": 0, "t": 0.0, "tau": 0.0,
         "H": float(H[0]), "F": float(F[0]), "newton_iters": 0, "residual": 0.0}
    ]
    for n, rep in enumerate(traj.reports, start=1):
        recs.append({
            "schema": LOG_SCHEMA_ID, "scheme": "lagrangian", "n": n, "t": float(traj.times[n]),
            "tau": rep.tau_used, "H": float(H[n]), "F": float(F[n]),
            "newton_iters": rep.newton_iters, "residual": rep.final_residual,
        })
    return recs


def reference_log(ref) -> list[dict]:
    """Log records of a ReferenceTrajectory (stored fields only, no Fisher information)."""
    kept_all = len(ref.fields) == len(ref.taus) + 1
    recs = []
    for i, (t, u) in enumerate(zip(ref.times, ref.fields)):
        n = i if kept_all else (len(ref.taus) if i else 0)
        recs.append({
            "schema": LOG_SCHEMA_ID, "scheme": "reference", "n": n, "t": float(t),
            "tau": float(ref.taus[n - 1]) if n else 0.0, "H": u.entropy(), "F": None,
            "newton_iters": 0, "residual": None,
        })
    return recs


def write_log(stem, records: Iterable[dict]) -> tuple[Path, Path]:
    """Write ``stem.csv`` and ``stem.jsonl``; every record is validated."""
    stem = Path(stem)
    records = [_clean(r) for r in records]
    for r in records:
        validate(r)
    csv_path, jl_path = _with_ext(stem, ".csv"), _with_ext(stem, ".jsonl")
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in records:
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in LOG_COLUMNS])
    jl_path.write_text("".join(json.dumps(r, allow_nan=False) + "\n" for r in records))
    return csv_path, jl_path


def read_log(path) -> list[dict]:
    return [validate(json.loads(line)) for line in Path(path).read_text().splitlines() if line.strip()]


# --- full trajectories (for re-analysis) ----------------------------------------------

_REPORT_FLOATS = ("final_residual", "tau_used", "entropy_before", "entropy_after",
                  "fisher_before", "fisher_after", "tau_requested")


def _report_dict(rep: StepReport) -> dict:
    d = {k: float(getattr(rep, k)).hex() for k in _REPORT_FLOATS}
    d.update(newton_iters=rep.newton_iters, fallback_taken=rep.fallback_taken, fallback=rep.fallback)
    return d


def _report_from(d: dict) -> StepReport:
    kw = {k: float.fromhex(d[k]) for k in _REPORT_FLOATS}
    return StepReport(newton_iters=int(d["newton_iters"]), fallback_taken=bool(d["fallback_taken"]),
                      fallback=str(d.get("fallback", "")), **kw)


def write_trajectory(path, traj: Trajectory) -> Path:
    rec = {
        "schema": TRAJECTORY_SCHEMA_ID,
        "domain": _domain_exact(traj.domain),
        "xi": _hex(traj.grid.xi),
        "times": _hex(traj.times),
        "nodes": [_hex(s.x) for s in traj.states],
        "reports": [_report_dict(r) for r in traj.reports],
        "error": None if traj.error is None else repr(traj.error),
    }
    return write_json(path, rec)


def read_trajectory(path) -> Trajectory:
    rec = read_json(path)
    dom = _domain_from(rec["domain"])
    grid = MassGrid(_unhex(rec["xi"]))
    states = [LagrangianState(_unhex(x), dom) for x in rec["nodes"]]
    reports = [_report_from(d) for d in rec["reports"]]
    return Trajectory(_unhex(rec["times"]), states, reports, grid, dom, None)


# --- reports and tables -------------------------------------------------------------


def write_verification(path, reports, extra: dict | None = None) -> Path:
    dicts = [r.to_dict() if hasattr(r, "to_dict") else dict(r) for r in reports]
    rec = {"schema": REPORT_SCHEMA_ID, "passed": all(d["satisfied"] for d in dicts), "reports": dicts}
    if extra:
        rec.update(extra)
    return write_json(path, rec)


def write_error(path, exc: BaseException, **context) -> Path:
    rec = {"schema": ERROR_SCHEMA_ID, "error": type(exc).__name__, "message": str(exc)}
    rec.update(context)
    return write_json(path, rec)


def write_table(stem, header: Sequence[str], rows) -> tuple[Path, Path]:
    """Write ``stem.csv`` and a whitespace-separated ``stem.dat`` with the same columns."""
    stem = Path(stem)
    rows = [list(r) for r in rows]
    csv_path, dat_path = _with_ext(stem, ".csv"), _with_ext(stem, ".dat")
    fmt = lambda v: repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[fmt(v) for v in r] for r in rows])
    dat_path.write_text("# " + " ".join(header) + "\n" + "".join(" ".join(fmt(v) for v in r) + "\n" for r in rows))
    return csv_path, dat_path

