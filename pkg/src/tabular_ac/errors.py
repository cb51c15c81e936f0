"""Exception types raised across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the domain where a quantity is defined."""


class StepTooLargeError(DomainError):
    """A multiplicative update weight ``1 + eta * advantage`` fell below the safety margin."""

    def __init__(self, state: int, action: int, weight: float, max_eta: float):
        self.state = state
        self.action = action
        self.weight = weight
        self.max_eta = max_eta
        super().__init__(
            f"step size too large: 1 + eta*advantage = {weight:.3e} at (s={state}, a={action}); "
            f"largest admissible eta is {max_eta:.6g}"
        )


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class InvalidScheduleError(ValueError):
    """A step-size schedule is ill-defined for the given constants."""


class EmptyBufferError(RuntimeError):
    """Sampling was requested from a replay buffer with no transitions."""


class ConfigError(ValueError):
    """A run configuration is malformed or internally inconsistent."""


class IterationError(RuntimeError):
    """Wraps an error raised inside a training loop with the iteration index."""

    def __init__(self, iteration: int, cause: BaseException):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
