"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class LagDLSSError(Exception):
    """Base class for all errors raised by this package."""


class MonotonicityError(LagDLSSError, ValueError):
    """A node vector is not strictly increasing inside its domain.

    ``index`` is the first offending node index k (with the convention
    x_0 = a, x_K = b), i.e. the first k with x_k - x_{k-1} too small.
    """

    def __init__(self, index: int, gap: float, message: str | None = None):
        self.index = int(index)
        self.gap = float(gap)
        super().__init__(
            message
            or f"node vector not strictly monotone at k={self.index} "
            f"(x_k - x_(k-1) = {self.gap:.3e})"
        )


class GridMismatchError(LagDLSSError, ValueError):
    """Two objects that must share a grid or domain do not."""


class NonConvergence(LagDLSSError):
    """Newton iteration did not reach the residual tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(f"{message} (residual={self.residual:.3e}, iters={self.iterations})")


class MonotonicityLoss(LagDLSSError):
    """Every fallback was exhausted without producing a monotone iterate."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(message)


class MinimizationFailure(LagDLSSError):
    """Direct minimization of the Yosida objective found no descent."""


class PositivityLoss(LagDLSSError):
    """Eulerian reference step produced a non-positive or non-finite field."""


class StepError(LagDLSSError):
    """A trajectory step failed; wraps the cause together with the step index."""

    def __init__(self, step: int, cause: Exception):
        self.step = int(step)
        self.cause = cause
        super().__init__(f"step {self.step} failed: {cause}")
