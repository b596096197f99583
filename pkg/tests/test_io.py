import csv
import json
import math

import jsonschema
import numpy as np
import pytest

from lagdlss import io
from lagdlss.analysis import check_dissipation_estimates
from lagdlss.data import cos16, uniform_mass_setup
from lagdlss.errors import NonConvergence
from lagdlss.grid import Domain
from lagdlss.reference import EulerianField, run_reference

from conftest import random_state


def test_validate_rejects_unknown_and_malformed():
    with pytest.raises(ValueError, match="unknown schema"):
        io.validate({"schema": "nope/1"})
    with pytest.raises(jsonschema.ValidationError):
        io.validate({"schema": io.ERROR_SCHEMA_ID, "error": 3})


def test_nonfinite_floats_become_null(tmp_path):
    p = io.write_error(tmp_path / "e.json", RuntimeError("x"), value=math.nan, big=np.float64(math.inf))
    rec = json.loads(p.read_text())
    assert rec["value"] is None and rec["big"] is None


def test_with_ext_keeps_dots_in_stem(tmp_path):
    assert io._with_ext(tmp_path / "snap_t1.5e-3", ".csv").name == "snap_t1.5e-3.csv"


def test_state_json_roundtrip(tmp_path, rng):
    st, g = random_state(rng, 9, Domain(-0.5, 1.5, 2.0), uniform_grid=False)
    p = io.write_state_json(tmp_path / "s.json", st, g)
    st2, g2 = io.read_state_json(p)
    np.testing.assert_array_equal(st2.x, st.x)
    np.testing.assert_array_equal(g2.xi, g.xi)


def test_state_tables(tmp_path, rng):
    st, g = random_state(rng, 5)
    rows = list(csv.reader(io.write_state_csv(tmp_path / "s.csv", st, g).open()))
    assert rows[0] == ["k", "xi", "x", "z"] and len(rows) == 7
    assert float(rows[1][2]) == st.domain.a and float(rows[-1][2]) == st.domain.b
    dat = io.write_state_dat(tmp_path / "s.dat", st, g, "t=0").read_text().splitlines()
    assert dat[0] == "# t=0" and len(dat) == 8


def test_restart_is_bit_exact(tmp_path, rng):
    st, g = random_state(rng, 11, Domain(0.1, 0.7, 0.3), uniform_grid=False)
    t, tau = 1.0 / 3.0 * 1e-5, 2.0 / 7.0 * 1e-9
    io.write_restart(tmp_path / "r.json", st, g, t, 42, tau)
    st2, g2, t2, n2, tau2 = io.read_restart(tmp_path / "r.json")
    assert np.array_equal(st2.x, st.x) and np.array_equal(g2.xi, g.xi)
    assert (t2, n2, tau2) == (t, 42, tau)
    assert st2.domain == st.domain


def test_trajectory_roundtrip_reproduces_analysis(tmp_path, cos16_short):
    p = io.write_trajectory(tmp_path / "tr.json", cos16_short)
    tr = io.read_trajectory(p)
    assert np.array_equal(tr.nodes, cos16_short.nodes) and np.array_equal(tr.times, cos16_short.times)
    assert tr.reports == cos16_short.reports
    a = [r.to_dict() for r in check_dissipation_estimates(cos16_short)]
    b = [r.to_dict() for r in check_dissipation_estimates(tr)]
    assert a == b


def test_logs(tmp_path, cos16_short):
    recs = io.lagrangian_log(cos16_short)
    csv_p, jl_p = io.write_log(tmp_path / "log", recs)
    back = io.read_log(jl_p)
    assert len(back) == len(cos16_short.states)
    assert [r["n"] for r in back] == list(range(len(back)))
    rows = list(csv.DictReader(csv_p.open()))
    assert tuple(rows[0]) == io.LOG_COLUMNS
    assert float(rows[-1]["t"]) == pytest.approx(cos16_short.times[-1])


def test_reference_log(tmp_path):
    d = cos16()
    ref = run_reference(EulerianField.from_cdf(d.domain, d.cdf, 50), 1e-7, 1e-8)
    recs = io.reference_log(ref)
    io.write_log(tmp_path / "ref", recs)
    assert recs[0]["n"] == 0 and recs[-1]["n"] == len(ref.taus)
    assert all(r["F"] is None for r in recs)


def test_verification_and_table(tmp_path, cos16_short):
    reps = check_dissipation_estimates(cos16_short)
    rec = io.read_json(io.write_verification(tmp_path / "v.json", reps, {"note": "x"}))
    assert rec["passed"] and len(rec["reports"]) == len(reps) and rec["note"] == "x"
    c, d = io.write_table(tmp_path / "err", ["K", "error", "slope"], [(25, 0.1, 2.0), (50, 0.025, 2.0)])
    assert c.read_text().splitlines()[0] == "K,error,slope"
    assert d.read_text().splitlines()[2] == "50 0.025 2.0"


def test_error_record(tmp_path):
    rec = io.read_json(io.write_error(tmp_path / "e.json", NonConvergence("stuck", 1e-3, 50), step=3))
    assert rec["error"] == "NonConvergence" and rec["step"] == 3
