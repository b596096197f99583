"""Implicit Euler minimizing-movement steps and trajectory orchestration.

One step solves (x - y)/tau + grad_delta F(x) = 0 for x given the previous
state y.  Multiplying by the metric weights gives the symmetric system

    D (x - y)/tau + dF/dx(x) = 0,        D = diag(delta_k),

whose Jacobian D/tau + d^2F/dx^2 is pentadiagonal; Newton solves it with a
banded LU in O(K) per iteration.  The same matrix is the Hessian of the Yosida
objective, which the minimization fallback exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator, Protocol, Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve_banded, solveh_banded

from .errors import MinimizationFailure, MonotonicityLoss, NonConvergence, StepError
from .functionals import (
    entropy_from_widths,
    fisher_from_widths,
    fisher_hessian_from_widths,
    fisher_partial_from_widths,
)
from .grid import Domain, LagrangianState, MassGrid, is_monotone

#: Newton updates below this size (relative to b - a) are at the rounding floor.
ROUNDOFF_STEP = 1e-12


class FallbackPolicy(str, Enum):
    """Where the fallback ladder halve-tau -> minimize-directly -> fail starts."""

    HALVE_TAU = "halve-tau"
    MINIMIZE = "minimize-directly"
    FAIL = "fail"


@dataclass(frozen=True)
class Damping:
    shrink: float = 0.5
    min_fraction: float = 2.0 ** -30
    decrease: float = 0.99  # required residual reduction factor per accepted update

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.min_fraction <= 1:
            raise ValueError("min_fraction must lie in (0, 1]")
        if not 0 < self.decrease <= 1:
            raise ValueError("decrease must lie in (0, 1]")


@dataclass(frozen=True)
class SolverConfig:
    """Newton tolerances, damping and fallback policy.

    A step counts as converged once ||residual||_delta is at most
    max(newton_tol, newton_rtol * ||residual(x_prev)||_delta).
    """

    newton_tol: float = 1e-9
    newton_rtol: float = 1e-10
    max_newton_iters: int = 60
    damping: Damping = field(default_factory=Damping)
    tau_min: float = 1e-18
    tau_max: float = math.inf
    fallback_policy: FallbackPolicy = FallbackPolicy.HALVE_TAU
    max_halvings: int = 12
    max_minimize_iters: int = 500

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_rtol < 0:
            raise ValueError("newton_rtol must be non-negative")
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        object.__setattr__(self, "fallback_policy", FallbackPolicy(self.fallback_policy))


@dataclass(frozen=True)
class StepReport:
    newton_iters: int
    final_residual: float
    tau_used: float
    entropy_before: float
    entropy_after: float
    fisher_before: float
    fisher_after: float
    fallback_taken: bool
    tau_requested: float = math.nan
    fallback: str = ""


class _Problem:
    """Residual, objective and Jacobian for one step with fixed anchor y and tau."""

    def __init__(self, y: np.ndarray, tau: float, grid: MassGrid, domain: Domain):
        self.y = y
        self.tau = tau
        self.grid = grid
        self.domain = domain
        self.d = grid.delta_int

    def widths(self, x):
        h = np.empty(x.size + 1)
        h[0] = x[0] - self.domain.a
        h[1:-1] = np.diff(x)
        h[-1] = self.domain.b - x[-1]
        return h

    def residual(self, x, h=None):
        h = self.widths(x) if h is None else h
        return (x - self.y) / self.tau + fisher_partial_from_widths(h, self.grid) / self.d

    def norm(self, r) -> float:
        return math.sqrt(math.fsum(self.d * r * r))

    def objective(self, x) -> float:
        dx = x - self.y
        return math.fsum(self.d * dx * dx) / (2.0 * self.tau) + fisher_from_widths(self.widths(x), self.grid)

    def jacobian(self, h):
        return fisher_hessian_from_widths(h, self.grid).with_diagonal_added(self.d / self.tau)

    def monotone(self, x) -> bool:
        return is_monotone(x, self.domain)


def residual(x: LagrangianState, x_prev: LagrangianState, tau: float, grid: MassGrid) -> np.ndarray:
    """(x - x_prev)/tau + grad_delta F(x)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return _Problem(x_prev.x, tau, grid, x_prev.domain).residual(x.x)


def _tolerance(r0: float, config: SolverConfig) -> float:
    return max(config.newton_tol, config.newton_rtol * r0)


def _newton(prob: _Problem, x0: np.ndarray, config: SolverConfig):
    """Damped Newton; returns (x, iterations, residual norm) or raises."""
    x = np.array(x0, dtype=float)
    h = prob.widths(x)
    r = prob.residual(x, h)
    nr = prob.norm(r)
    tol = _tolerance(prob.norm(prob.residual(prob.y)), config)
    damp = config.damping
    L = prob.domain.length
    for it in range(config.max_newton_iters + 1):
        if nr <= tol:
            return x, it, nr
        if it == config.max_newton_iters:
            break
        S = prob.jacobian(h)
        try:
            dx = solve_banded((2, 2), S.solve_banded_form(2), -prob.d * r, check_finite=False)
        except (LinAlgError, ValueError) as exc:
            raise NonConvergence(f"singular Newton system ({exc})", nr, it) from None
        if not np.all(np.isfinite(dx)):
            raise NonConvergence("non-finite Newton update", nr, it)
        s = 1.0
        accepted = False
        while s >= damp.min_fraction:
            xn = x + s * dx
            if prob.monotone(xn):
                hn = prob.widths(xn)
                rn = prob.residual(xn, hn)
                nn = prob.norm(rn)
                if nn <= damp.decrease * nr:
                    accepted = True
                    break
            s *= damp.shrink
        if not accepted:
            # Rounding floor: the full update no longer moves the nodes.
            if np.max(np.abs(dx)) <= ROUNDOFF_STEP * L and prob.monotone(x + dx):
                return x, it, nr
            raise NonConvergence("line search found no admissible residual decrease", nr, it)
        x, h, r, nr = xn, hn, rn, nn
    raise NonConvergence("maximum Newton iterations reached", nr, config.max_newton_iters)


def _minimize(prob: _Problem, x0: np.ndarray, config: SolverConfig):
    """Damped Newton descent on the Yosida objective inside the monotone cone.

    The Hessian is shifted by a multiple of D/tau when it is not positive
    definite; steps are accepted under an Armijo condition.
    """
    x = np.array(x0, dtype=float)
    phi = prob.objective(x)
    tol = _tolerance(prob.norm(prob.residual(prob.y)), config)
    mu = 0.0
    L = prob.domain.length
    for it in range(config.max_minimize_iters):
        h = prob.widths(x)
        r = prob.residual(x, h)
        nr = prob.norm(r)
        if nr <= tol:
            return x, it, nr
        g = prob.d * r  # Euclidean gradient of the objective
        S = prob.jacobian(h)
        while True:
            Sm = S.with_diagonal_added(mu * prob.d / prob.tau)
            ab = Sm.solve_banded_form(2)[2:]  # lower form: main, sub1, sub2
            try:
                p = -solveh_banded(ab, g, lower=True, check_finite=False)
                break
            except LinAlgError:
                mu = max(1e-3, 10.0 * mu)
                if mu > 1e12:
                    raise MinimizationFailure(f"Hessian shift diverged at iteration {it}") from None
        slope = float(g @ p)
        if slope >= 0:
            p, slope = -g, -float(g @ g)
        # below the rounding level of phi the Armijo test is blind; use the residual instead
        blind = -slope <= 64.0 * np.finfo(float).eps * max(1.0, abs(phi))
        alpha = 1.0
        while alpha >= 1e-14:
            xn = x + alpha * p
            if prob.monotone(xn):
                pn = prob.objective(xn)
                if blind:
                    if prob.norm(prob.residual(xn)) <= (1.0 - 1e-4 * alpha) * nr:
                        break
                elif pn <= phi + 1e-4 * alpha * slope:
                    break
            alpha *= 0.5
        else:
            if np.max(np.abs(p)) <= ROUNDOFF_STEP * L:
                return x, it, nr
            raise MinimizationFailure(
                f"no descent found at iteration {it}: objective={phi:.6e}, residual={nr:.3e}"
            )
        x, phi = xn, pn
        mu = mu / 10.0 if alpha == 1.0 else mu
    h = prob.widths(x)
    nr = prob.norm(prob.residual(x, h))
    raise MinimizationFailure(f"no convergence after {config.max_minimize_iters} iterations (residual={nr:.3e})")


def _report(prob, x, iters, res, tau_req, fallback) -> StepReport:
    g = prob.grid
    L = prob.domain.length
    hy, hx = prob.widths(prob.y), prob.widths(x)
    return StepReport(
        newton_iters=iters,
        final_residual=res,
        tau_used=prob.tau,
        entropy_before=entropy_from_widths(hy, g, L),
        entropy_after=entropy_from_widths(hx, g, L),
        fisher_before=fisher_from_widths(hy, g),
        fisher_after=fisher_from_widths(hx, g),
        fallback_taken=bool(fallback),
        tau_requested=tau_req,
        fallback=fallback,
    )


def minimize_yosida(x_prev: LagrangianState, tau: float, grid: MassGrid, config: SolverConfig | None = None) -> LagrangianState:
    """Minimizer of (1/(2 tau))||x - x_prev||_delta^2 + F(x) over monotone states."""
    config = config or SolverConfig()
    if not tau > 0:
        raise ValueError("tau must be positive")
    prob = _Problem(x_prev.x, tau, grid, x_prev.domain)
    x, _, _ = _minimize(prob, x_prev.x, config)
    return LagrangianState(x, x_prev.domain)


def newton_step(
    x_prev: LagrangianState,
    tau: float,
    grid: MassGrid,
    config: SolverConfig | None = None,
    guess: np.ndarray | None = None,
) -> tuple[LagrangianState, StepReport]:
    """Advance one step; the returned report's tau_used may be below tau after halving."""
    config = config or SolverConfig()
    if not tau > 0:
        raise ValueError("tau must be positive")
    if x_prev.K != grid.K:
        from .errors import GridMismatchError

        raise GridMismatchError(f"state has K={x_prev.K}, grid has K={grid.K}")
    dom = x_prev.domain
    y = x_prev.x
    x0 = y if guess is None else np.asarray(guess, dtype=float)
    prob = _Problem(y, tau, grid, dom)
    try:
        if not prob.monotone(x0):
            x0 = y
        x, it, res = _newton(prob, x0, config)
        return LagrangianState(x, dom), _report(prob, x, it, res, tau, "")
    except NonConvergence as exc:
        first = exc

    policy = config.fallback_policy
    if policy is FallbackPolicy.FAIL:
        raise first
    if policy is FallbackPolicy.HALVE_TAU:
        t = tau
        for _ in range(config.max_halvings):
            t *= 0.5
            if t < config.tau_min:
                break
            sub = _Problem(y, t, grid, dom)
            try:
                x, it, res = _newton(sub, y, config)
            except NonConvergence:
                continue
            return LagrangianState(x, dom), _report(sub, x, it, res, tau, "halve-tau")
    try:
        x, it, res = _minimize(prob, y, config)
    except MinimizationFailure as exc:
        raise MonotonicityLoss(
            f"all fallbacks exhausted: {first}; minimization: {exc}", first.residual, first.iterations
        ) from exc
    return LagrangianState(x, dom), _report(prob, x, it, res, tau, "minimize-directly")


# --- schedules -----------------------------------------------------------------


class Schedule(Protocol):
    t_end: float

    def next_tau(self, n: int, t: float, last: StepReport | None) -> float | None:
        """Time step for step n+1 starting at time t, or None when finished."""


def _remaining(t_end: float, t: float, tau: float) -> float | None:
    rem = t_end - t
    if rem <= 1e-9 * tau:
        return None
    # absorb a final sliver into the last step
    return rem if rem <= tau * (1.0 + 1e-9) else tau


@dataclass(frozen=True)
class FixedSchedule:
    """Constant tau up to t_end (t_n = n tau when no step is halved)."""

    tau: float
    t_end: float

    def __post_init__(self):
        if not (self.tau > 0 and self.t_end >= 0):
            raise ValueError("need tau > 0 and t_end >= 0")

    @classmethod
    def steps(cls, tau: float, n: int) -> "FixedSchedule":
        return cls(tau, n * tau)

    def next_tau(self, n, t, last):
        return _remaining(self.t_end, t, self.tau)


@dataclass(frozen=True)
class AdaptiveSchedule:
    """Geometric growth by ``growth`` after each clean step, clamped to [tau_min, tau_max].

    A step that needed a fallback, or that the optional ``guard`` rejects,
    does not grow: the next proposal reuses the (already reduced) tau_used.
    """

    t_end: float
    tau0: float
    growth: float = 1.1
    tau_min: float = 0.0
    tau_max: float = math.inf
    guard: Callable[[StepReport], bool] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.tau0 > 0 and self.growth >= 1 and self.tau0 >= self.tau_min):
            raise ValueError("need tau0 > 0, tau0 >= tau_min and growth >= 1")

    def propose(self, last: StepReport | None) -> float:
        if last is None:
            tau = self.tau0
        elif self.guard is not None and not self.guard(last):
            tau = 0.5 * last.tau_used
        elif last.fallback_taken:
            tau = last.tau_used
        else:
            tau = last.tau_used * self.growth
        return min(max(tau, self.tau_min), self.tau_max)

    def next_tau(self, n, t, last):
        return _remaining(self.t_end, t, self.propose(last))

    def replay(self, reports: Sequence[StepReport]) -> list[float]:
        """Untruncated proposals the schedule makes given a sequence of reports."""
        out = [self.propose(None)]
        for rep in reports[:-1]:
            out.append(self.propose(rep))
        return out


# --- trajectories ----------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    reports: list
    grid: MassGrid
    domain: Domain
    error: StepError | None = None

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau_used for r in self.reports])

    @property
    def nodes(self) -> np.ndarray:
        """Array of shape (N+1, K-1) with all interior nodes."""
        return np.array([s.x for s in self.states])

    @property
    def entropies(self) -> np.ndarray:
        if not self.reports:
            from .functionals import entropy

            return np.array([entropy(self.states[0], self.grid)])
        return np.array([self.reports[0].entropy_before] + [r.entropy_after for r in self.reports])

    @property
    def fishers(self) -> np.ndarray:
        if not self.reports:
            from .functionals import fisher

            return np.array([fisher(self.states[0], self.grid)])
        return np.array([self.reports[0].fisher_before] + [r.fisher_after for r in self.reports])

    @property
    def completed(self) -> bool:
        return self.error is None

    def __len__(self):
        return len(self.states)

    def state_at(self, t: float, rtol: float = 1e-9) -> LagrangianState:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > rtol * max(abs(t), 1e-300):
            raise ValueError(f"time {t} is not a step of this trajectory")
        return self.states[i]


def run(
    x0: LagrangianState,
    grid: MassGrid,
    schedule: Schedule,
    config: SolverConfig | None = None,
    raise_on_error: bool = False,
    callback: Callable[[int, float, LagrangianState, StepReport], None] | None = None,
    predictor: bool = False,
) -> Trajectory:
    """Advance from x0 until the schedule ends.

    On an unrecoverable step the partial trajectory is returned with ``error``
    set (or the StepError is raised when ``raise_on_error``).  With
    ``predictor`` the Newton iteration starts from a linear extrapolation of the
    last two states when that is monotone.
    """
    config = config or SolverConfig()
    if x0.K != grid.K:
        from .errors import GridMismatchError

        raise GridMismatchError(f"state has K={x0.K}, grid has K={grid.K}")
    states = [x0]
    reports: list[StepReport] = []
    taus: list[float] = []
    times = [0.0]
    n = 0
    last = None
    error = None
    while True:
        tau = schedule.next_tau(n, times[-1], last)
        if tau is None:
            break
        guess = None
        if predictor and len(states) >= 2 and reports:
            ratio = tau / reports[-1].tau_used
            guess = states[-1].x + ratio * (states[-1].x - states[-2].x)
        try:
            state, rep = newton_step(states[-1], tau, grid, config, guess=guess)
        except Exception as exc:  # noqa: BLE001 - wrapped with the step index
            error = StepError(n + 1, exc)
            if raise_on_error:
                raise error from exc
            break
        n += 1
        taus.append(rep.tau_used)
        times.append(math.fsum(taus))
        states.append(state)
        reports.append(rep)
        last = rep
        if callback is not None:
            callback(n, times[-1], state, rep)
    return Trajectory(np.array(times), states, reports, grid, x0.domain, error)
