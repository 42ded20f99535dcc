"""Exception hierarchy shared by all solver layers."""

from __future__ import annotations


class ThermistorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ThermistorError, ValueError):
    """Invalid problem, grid, stepper or run configuration.

    ``field`` names the offending configuration entry when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class EvaluationError(ThermistorError, ArithmeticError):
    """The source function produced a non-finite value."""

    def __init__(self, xi: float, value: float):
        self.xi = xi
        self.value = value
        super().__init__(f"source evaluation failed at xi={xi!r} (got {value!r})")


class DegeneracyError(ThermistorError, ArithmeticError):
    """The integral of f(u) fell below the positive floor implied by f >= sigma."""

    def __init__(self, integral: float, floor: float):
        self.integral = integral
        self.floor = floor
        super().__init__(
            f"integral of f(u) = {integral!r} is below the floor {floor!r}; "
            "the source violates its lower bound"
        )


class RangeError(ThermistorError, OverflowError):
    """A threshold computation left the representable floating point range."""


class BlowUpError(ThermistorError):
    """The discrete solution became non-finite or exceeded the divergence cap."""

    def __init__(self, step: int | None, time: float | None, message: str = ""):
        self.step = step
        self.time = time
        super().__init__(message or f"solution diverged at step {step}, t={time}")


class SolverError(ThermistorError):
    """Newton iteration failed to reach the requested residual."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Newton did not converge in {iterations} iterations (residual {residual:.3e})"
        )


class ProbeError(ThermistorError):
    """A probe could not be evaluated (as opposed to a failed check)."""


class StepBudgetError(ThermistorError):
    """A run exhausted ``max_steps`` before reaching its final sample time."""

    def __init__(self, steps: int, time: float):
        self.steps = steps
        self.time = time
        super().__init__(f"step budget of {steps} exhausted at t={time}")
