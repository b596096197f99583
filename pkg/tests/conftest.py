import numpy as np
import pytest
from hypothesis import strategies as st

from lagdlss.data import cos16, uniform_mass_setup
from lagdlss.grid import Domain, LagrangianState, MassGrid, uniform_mass_grid
from lagdlss.solver import FixedSchedule, run


def random_state(rng, K, domain=None, spread=1.0, uniform_grid=True):
    """Random monotone state; ``spread`` controls the width contrast (log-normal)."""
    domain = domain or Domain(0.0, 1.0, 1.0)
    w = np.exp(spread * rng.standard_normal(K))
    x = domain.a + domain.length * np.cumsum(w)[:-1] / w.sum()
    if uniform_grid:
        grid = uniform_mass_grid(K, domain.M)
    else:
        m = np.exp(0.5 * rng.standard_normal(K))
        xi = np.concatenate([[0.0], np.cumsum(m) / m.sum() * domain.M])
        xi[-1] = domain.M
        grid = MassGrid(xi)
    return LagrangianState(x, domain), grid


@st.composite
def states(draw, min_K=2, max_K=12, uniform_grid=None, spread=1.0):
    """Hypothesis strategy for (state, grid) pairs on random domains."""
    K = draw(st.integers(min_K, max_K))
    a = draw(st.floats(-2.0, 2.0))
    L = draw(st.floats(0.2, 4.0))
    M = draw(st.floats(0.1, 5.0))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    uni = draw(st.booleans()) if uniform_grid is None else uniform_grid
    rng = np.random.default_rng(seed)
    return random_state(rng, K, Domain(a, a + L, M), spread, uni)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture(scope="session")
def cos16_short():
    """cos16 datum, K=50, tau=1e-8, 100 steps on a uniform mass grid."""
    grid, x0 = uniform_mass_setup(cos16(), 50)
    return run(x0, grid, FixedSchedule.steps(1e-8, 100))


@pytest.fixture(scope="session")
def cos16_medium():
    """cos16 datum, K=50, tau=1e-7, 500 steps on a uniform mass grid."""
    grid, x0 = uniform_mass_setup(cos16(), 50)
    return run(x0, grid, FixedSchedule.steps(1e-7, 500))


#: criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
