"""Exception hierarchy for ndo-sim."""

from typing import Optional, Sequence


class NdoError(Exception):
    """Base class for all ndo-sim errors."""


class InvalidParameterError(NdoError, ValueError):
    """A physical or numerical parameter is out of its allowed range."""


class InvalidRateError(InvalidParameterError):
    """A rate that must be strictly positive is not."""


class InvalidDimensionError(InvalidParameterError):
    """A Fock-space dimension below 2 was requested."""


class UnsupportedParameterError(NdoError):
    """The requested operation has no meaning for these parameters."""


class InvalidStateError(NdoError, ValueError):
    """A density matrix or state vector violates its invariants."""


class NumericalError(NdoError):
    """Base class for failures of a numerical procedure."""


class IntegrationError(NumericalError):
    """An ODE integration stopped before reaching its final time."""

    def __init__(self, message: str, last_good_time: float) -> None:
        super().__init__(f"{message} (last good time {last_good_time:.6g})")
        self.last_good_time = last_good_time


class StepFailureError(NumericalError):
    """A stochastic step collapsed the state norm."""

    def __init__(self, message: str, time: float, seed: Optional[int] = None) -> None:
        super().__init__(message)
        self.time = time
        self.seed = seed


class ConvergenceError(NumericalError):
    """An iterative procedure did not meet its tolerance."""


class ConfigError(NdoError):
    """An experiment configuration failed validation."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None) -> None:
        location = field or "<root>"
        if line is not None:
            location = f"line {line}: {location}"
        super().__init__(f"{location}: {message}")
        self.field = field
        self.line = line


class UnknownPresetError(NdoError, KeyError):
    """No preset with the requested name exists."""

    def __init__(self, name: str, available: Sequence[str]) -> None:
        super().__init__(name)
        self.name = name
        self.available = list(available)

    def __str__(self) -> str:
        return f"unknown preset '{self.name}'; available: {', '.join(self.available)}"
