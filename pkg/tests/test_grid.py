import math

import numpy as np
import pytest
from hypothesis import given, settings

from lagdlss.data import cos16, discontinuous
from lagdlss.errors import GridMismatchError, MonotonicityError
from lagdlss.grid import (
    Domain,
    LagrangianState,
    MassGrid,
    cumulative_mass,
    density_pc,
    density_pl,
    eval_lagrangian,
    l2_distance,
    mass_grid_from_cdf,
    nodal_interpolant,
    PiecewiseLinear,
    uniform_mass_grid,
    weights,
)
from lagdlss.functionals import fisher

from conftest import random_state, states

UNIT = Domain(0.0, 1.0, 1.0)


def simpson(f, a, b, panels=10_000):
    x = np.linspace(a, b, 2 * panels + 1)
    y = f(x)
    h = (b - a) / (2 * panels)
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


# --- domains and mass grids ----------------------------------------------------------


@pytest.mark.parametrize("a,b,M", [(1.0, 1.0, 1.0), (2.0, 1.0, 1.0), (0.0, 1.0, 0.0), (0.0, 1.0, -1.0)])
def test_domain_rejects_invalid(a, b, M):
    with pytest.raises(ValueError):
        Domain(a, b, M)


def test_uniform_mass_grid_small_cases():
    g = uniform_mass_grid(4, 1.0)
    np.testing.assert_array_equal(g.xi, [0, 0.25, 0.5, 0.75, 1.0])
    g2 = uniform_mass_grid(2, 2.0)
    np.testing.assert_array_equal(g2.xi, [0.0, 1.0, 2.0])
    assert g2.delta == 1.0
    assert g.is_uniform and g.K == 4


def test_uniform_mass_grid_cos16_mass_against_simpson():
    d = cos16()
    M_ref = simpson(d.density, 0.0, 1.0)
    g = uniform_mass_grid(200, d.domain.M)
    assert d.domain.M == pytest.approx(M_ref, rel=1e-12)
    assert g.delta == pytest.approx(M_ref / 200, rel=1e-12)
    assert math.fsum(g.delta_half) == pytest.approx(d.domain.M, rel=1e-14)


@pytest.mark.parametrize("K", [1, 0, 2.5])
def test_uniform_mass_grid_rejects_bad_K(K):
    with pytest.raises(ValueError):
        uniform_mass_grid(K, 1.0)


def test_mass_grid_validation():
    with pytest.raises(ValueError):
        MassGrid([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        MassGrid([0.1, 0.5, 1.0])
    g = MassGrid([0.0, 0.2, 1.0])
    assert not g.is_uniform
    with pytest.raises(ValueError):
        _ = g.delta
    np.testing.assert_allclose(g.delta_int, [0.5])


def test_mass_grid_from_cdf_constant_density_is_uniform():
    x = np.linspace(0.0, 2.0, 9)
    g = mass_grid_from_cdf(lambda t: np.full_like(t, 1.5), x)
    assert g.is_uniform
    np.testing.assert_allclose(g.xi, 1.5 * x, rtol=1e-13)


def test_mass_grid_from_cdf_cos16_against_simpson():
    d = cos16()
    x = np.linspace(0, 1, 5)
    g = mass_grid_from_cdf(d.density, x)
    ref = [simpson(d.density, 0.0, xk) if xk > 0 else 0.0 for xk in x]
    np.testing.assert_allclose(g.xi, ref, rtol=1e-10, atol=1e-14)
    assert g.xi[2] == pytest.approx(g.M / 2, rel=1e-12)


def test_mass_grid_from_cdf_discontinuous_matches_exact_cdf():
    d = discontinuous()
    x = np.linspace(0, 1, 13)
    g = mass_grid_from_cdf(d.density, x, d.breakpoints)
    np.testing.assert_allclose(g.xi, d.cdf(x), rtol=1e-12, atol=1e-15)
    slopes = np.diff(g.xi) / np.diff(x)
    assert np.all(np.diff(g.xi) > 0)
    # slope u0 drops at 1/3 and recovers at 2/3
    assert slopes[3] == pytest.approx(1.0) and slopes[4] == pytest.approx(1e-3) and slopes[8] == pytest.approx(1.0)


def test_cumulative_mass_accuracy():
    d = cos16()
    x = np.linspace(0, 1, 7)
    np.testing.assert_allclose(cumulative_mass(d.density, x), d.cdf(x), rtol=1e-10, atol=1e-14)


# --- states and weights --------------------------------------------------------------


def test_state_rejects_non_monotone_and_degenerate():
    with pytest.raises(MonotonicityError):
        LagrangianState(np.array([0.5, 0.4]), UNIT)
    with pytest.raises(MonotonicityError):
        LagrangianState(np.array([0.5, 0.5 + 1e-16]), UNIT)
    with pytest.raises(MonotonicityError):
        LagrangianState(np.array([1.2]), UNIT)


def test_weights_uniform_state():
    st = LagrangianState(np.array([0.25, 0.5, 0.75]), UNIT)
    w = weights(st, uniform_mass_grid(4, 1.0))
    np.testing.assert_allclose(w.z, 1.0)


def test_weights_k2_example_and_ghosts():
    st = LagrangianState(np.array([0.25]), UNIT)
    w = weights(st, uniform_mass_grid(2, 1.0))
    np.testing.assert_allclose(w.z, [2.0, 2.0 / 3.0])
    assert w[-1] == w[0] and w[2] == w[1]
    with pytest.raises(IndexError):
        w[3]
    assert w.z.size == 2  # ghosts are never stored
    np.testing.assert_allclose(w.extended, [2, 2, 2 / 3, 2 / 3])


def test_grid_mismatch():
    st = LagrangianState(np.array([0.25]), UNIT)
    with pytest.raises(GridMismatchError):
        weights(st, uniform_mass_grid(3, 1.0))
    with pytest.raises(GridMismatchError):
        weights(st, uniform_mass_grid(2, 2.0))


@settings(max_examples=200, deadline=None)
@given(states())
def test_weight_definition_and_roundtrip(sg):
    st, g = sg
    z = weights(st, g).z
    assert np.all(z > 0)
    np.testing.assert_allclose(z * st.widths, g.delta_half, rtol=1e-14)
    # reconstruct x from the cell widths delta/z
    x = st.domain.a + np.cumsum(g.delta_half / z)[:-1]
    np.testing.assert_allclose(x, st.x, rtol=0, atol=1e-14 * max(1.0, abs(st.domain.b)) * 4)


def test_weight_floor_on_random_states(rng):
    for _ in range(1000):
        st, g = random_state(rng, int(rng.integers(2, 30)), spread=2.0, uniform_grid=bool(rng.integers(2)))
        z = weights(st, g).z
        assert z.min() >= g.delta_half.min() / st.domain.length * (1 - 1e-12)


# --- densities -----------------------------------------------------------------------


def test_density_pc_uniform_and_example():
    st = LagrangianState(UNIT.uniform_state_nodes(5), UNIT)
    d = density_pc(st, uniform_mass_grid(5, 1.0))
    np.testing.assert_allclose(d(np.linspace(0.01, 0.99, 9)), 1.0)
    ex = density_pc(LagrangianState(np.array([0.25]), UNIT), uniform_mass_grid(2, 1.0))
    np.testing.assert_allclose(ex(np.array([0.1, 0.25, 0.3, 1.0])), [2, 2, 2 / 3, 2 / 3])
    assert ex.integral() == pytest.approx(1.0, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(states())
def test_mass_conservation_of_both_densities(sg):
    st, g = sg
    assert density_pc(st, g).integral() == pytest.approx(g.M, rel=1e-12)
    pl = density_pl(st, g)
    assert np.all(pl.values > 0)
    assert pl.M == pytest.approx(g.M, rel=1e-15)


def test_density_pl_example():
    st = LagrangianState(np.array([0.25]), UNIT)
    pl = density_pl(st, uniform_mass_grid(2, 1.0))
    assert pl(0.25) == pytest.approx(4.0 / 3.0)
    assert pl(0.125) == pytest.approx(2.0)
    s = pl.slopes
    # pieces: [0, 1/8], [1/8, 1/4], [1/4, 5/8], [5/8, 1]
    assert s[0] == 0.0 and s[3] == 0.0
    assert s[1] == pytest.approx(2.0 * (2.0 / 3.0 - 2.0) / 0.5)
    const = density_pl(LagrangianState(UNIT.uniform_state_nodes(4), UNIT), uniform_mass_grid(4, 1.0))
    np.testing.assert_allclose(const.slopes, 0.0, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(states(uniform_grid=True))
def test_density_pl_interpolates_nodes_and_is_flat_at_ends(sg):
    st, g = sg
    pl = density_pl(st, g)
    w = weights(st, g)
    np.testing.assert_allclose(pl(st.nodes), w.nodal, rtol=1e-12)
    mids = 0.5 * (st.nodes[1:] + st.nodes[:-1])
    np.testing.assert_allclose(pl(mids), w.z, rtol=1e-12)
    assert pl.slopes[0] == 0.0 and pl.slopes[-1] == 0.0


def test_sup_gap_between_interpolants(rng):
    """sup |u_hat - u_bar|^2 <= delta F on uniform grids."""
    for _ in range(200):
        st, g = random_state(rng, int(rng.integers(2, 20)), spread=1.0)
        pc, pl = density_pc(st, g), density_pl(st, g)
        # the gap is largest at the nodes, where u_hat jumps relative to u_bar
        left = np.abs(pl(st.nodes[1:-1]) - pc.values[:-1])
        right = np.abs(pl(st.nodes[1:-1]) - pc.values[1:])
        gap = max(left.max(), right.max())
        assert gap ** 2 <= g.delta * fisher(st, g) * (1 + 1e-12)


def test_eval_lagrangian():
    rng = np.random.default_rng(3)
    st, g = random_state(rng, 7, uniform_grid=False)
    np.testing.assert_array_equal(eval_lagrangian(st, g, g.xi), st.nodes)
    mid = eval_lagrangian(st, g, g.xi_half)
    np.testing.assert_allclose(mid, 0.5 * (st.nodes[1:] + st.nodes[:-1]), rtol=1e-14)
    u = LagrangianState(UNIT.uniform_state_nodes(6), UNIT)
    xs = np.linspace(0, 1, 17)
    np.testing.assert_allclose(eval_lagrangian(u, uniform_mass_grid(6, 1.0), xs), xs, atol=1e-15)
    with pytest.raises(ValueError):
        eval_lagrangian(st, g, 1.5)


def test_nodal_interpolant_on_uniform_state():
    st = LagrangianState(UNIT.uniform_state_nodes(4), UNIT)
    f = nodal_interpolant(st, uniform_mass_grid(4, 1.0))
    np.testing.assert_allclose(f(np.linspace(0, 1, 11)), 1.0)


def test_l2_distance_exact_for_affine_pieces():
    f = PiecewiseLinear([0.0, 1.0], [0.0], [1.0])
    g = PiecewiseLinear([0.0, 0.5, 1.0], [0.0, 0.0], [0.0, 0.0])
    assert l2_distance(f, g) == pytest.approx(math.sqrt(1.0 / 3.0), rel=1e-15)
    assert l2_distance(f, f) == 0.0
    # a jump inside f's piece is handled via the merged breakpoints
    h = PiecewiseLinear([0.0, 0.5, 1.0], [1.0, 0.0], [1.0, 0.0])
    assert l2_distance(h, g) == pytest.approx(math.sqrt(0.5), rel=1e-15)


def test_piecewise_entropy_closed_form_matches_quadrature():
    from scipy.integrate import quad

    p = PiecewiseLinear([0.0, 0.3, 1.0], [0.5, 2.0], [2.0, 2.0 + 1e-9])
    ref = sum(quad(lambda t: p(t) * np.log(p(t)), lo, hi, epsabs=1e-14)[0] for lo, hi in [(0, 0.3), (0.3, 1)])
    assert p.entropy_integral() == pytest.approx(ref, rel=1e-10)
