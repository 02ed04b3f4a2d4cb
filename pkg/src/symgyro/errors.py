"""Exception types shared across the package."""

from __future__ import annotations


class ContractError(ValueError):
    """An argument violates an operation's preconditions (shape, sign, emptiness)."""


class ConfigurationError(ValueError):
    """A model or experiment is assembled from incompatible parts."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values.

    Attributes:
        where: human-readable location of the failure (layer name, step index...).
    """

    def __init__(self, message: str, where: str | None = None):
        super().__init__(message if where is None else f"{message} (at {where})")
        self.where = where


class RolloutError(NumericalError):
    """A rollout hit a non-finite state.

    The finite prefix of the trajectory is kept on ``trajectory`` and the index
    of the first bad step on ``step``.
    """

    def __init__(self, step: int, trajectory):
        super().__init__("non-finite state in rollout", where=f"step {step}")
        self.step = step
        self.trajectory = trajectory


class IntegrationError(NumericalError):
    """The ground-truth integrator produced a non-finite state."""


class DivergenceError(NumericalError):
    """Training loss became non-finite.

    ``model`` holds the last parameters for which the loss was finite and
    ``report`` the history up to that point.
    """

    def __init__(self, epoch: int, model, report):
        super().__init__("training diverged", where=f"epoch {epoch}")
        self.epoch = epoch
        self.model = model
        self.report = report
