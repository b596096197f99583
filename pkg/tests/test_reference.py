import math

import numpy as np
import pytest

from lagdlss.data import cos16, discontinuous
from lagdlss.errors import PositivityLoss
from lagdlss.grid import Domain
from lagdlss.reference import EulerianField, laplacian, run_reference, semi_implicit_step

UNIT = Domain(0.0, 1.0, 1.0)


def explicit(u0: EulerianField, tau: float, substeps: int) -> np.ndarray:
    """Forward Euler micro-steps of u_t = -D2(u D2 ln u)."""
    u, h, dt = u0.values.copy(), u0.h, tau / substeps
    for _ in range(substeps):
        u = u - dt * laplacian(u * laplacian(np.log(u), h), h)
    return u


def cosine_field(N=64, amp=0.1):
    c = (np.arange(N) + 0.5) / N
    return EulerianField(UNIT, 1.0 + amp * np.cos(2 * np.pi * c))


def test_field_validation_and_geometry():
    with pytest.raises(PositivityLoss):
        EulerianField(UNIT, [1.0, 0.0])
    with pytest.raises(ValueError):
        EulerianField(UNIT, [1.0])
    f = EulerianField(UNIT, np.ones(4))
    np.testing.assert_allclose(f.edges, [0, 0.25, 0.5, 0.75, 1.0])
    assert f.mass() == 1.0 and f.entropy() == 0.0


def test_laplacian_kills_constants_and_conserves_sum(rng):
    v = rng.standard_normal(20)
    assert np.all(laplacian(np.full(20, 3.0), 0.1) == 0.0)
    assert abs(laplacian(v, 0.1).sum()) < 1e-10


def test_constant_field_is_fixed_point():
    f = EulerianField(UNIT, np.full(32, 1.0))
    for tau in (1e-10, 1e-4, 1.0):
        np.testing.assert_array_equal(semi_implicit_step(f, tau).values, f.values)


def test_step_matches_explicit_microsteps():
    u0 = cosine_field()
    u1 = semi_implicit_step(u0, 1e-8)
    ue = explicit(u0, 1e-8, 1000)
    assert np.max(np.abs(u1.values - ue)) / np.max(np.abs(ue)) <= 1e-3
    # the increment itself agrees to first order in tau
    inc = np.max(np.abs((u1.values - u0.values) - (ue - u0.values))) / np.max(np.abs(ue - u0.values))
    assert inc <= 1e-3


def test_mass_conservation_and_entropy_decay():
    u0 = EulerianField.from_cdf(cos16().domain, cos16().cdf, 200)
    tr = run_reference(u0, 1e-6, 1e-8, keep=True)
    masses = np.array([f.mass() for f in tr.fields])
    assert np.max(np.abs(masses - masses[0])) <= 1e-12 * masses[0]
    H = np.array([f.entropy() for f in tr.fields])
    assert H[-1] < H[0]
    assert tr.times[-1] == pytest.approx(1e-6, rel=1e-12)


def test_from_cdf_uses_exact_cell_averages():
    d = discontinuous()
    f = EulerianField.from_cdf(d.domain, d.cdf, 6)
    np.testing.assert_allclose(f.values, [1, 1, 1e-3, 1e-3, 1, 1], rtol=1e-12)
    assert f.mass() == pytest.approx(d.domain.M, rel=1e-14)


def test_discontinuous_reference_runs_to_1e8():
    d = discontinuous()
    u0 = EulerianField.from_cdf(d.domain, d.cdf, 800)
    tr = run_reference(u0, 1e-8, 1e-13, tau_max=1e-10, growth=1.2)
    assert tr.times[-1] == pytest.approx(1e-8, rel=1e-12)
    u = tr.final
    assert np.all(u.values > 0)
    assert u.mass() == pytest.approx(u0.mass(), rel=1e-12)
    # the semi-implicit scheme has no proven entropy inequality; record it only
    print(f"reference entropy {u0.entropy():.6e} -> {u.entropy():.6e}, rejected={tr.rejected}")


def test_run_reference_validation():
    with pytest.raises(ValueError):
        run_reference(cosine_field(), 1.0, 0.0)
    with pytest.raises(ValueError):
        semi_implicit_step(cosine_field(), -1.0)
    tr = run_reference(cosine_field(), 0.0, 1e-3)
    assert tr.times == [0.0] and len(tr.fields) == 1
