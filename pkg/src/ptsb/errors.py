"""Exception hierarchy shared by all modules.

The CLI maps :class:`ParameterError` (and subclasses) to exit status 2 and
:class:`NumericalError` (and subclasses) to exit status 3.
"""


class PtsbError(Exception):
    """Base class for all package errors."""


class ParameterError(PtsbError, ValueError):
    """Invalid or out-of-range input parameter."""


class ConfigError(ParameterError):
    """Unknown key, type mismatch or range violation in a run configuration."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalError(PtsbError, ArithmeticError):
    """A numerical procedure failed."""


class SingularModeError(NumericalError):
    """Near-resonant denominator in the per-mode displacement solve."""

    def __init__(self, mode, value):
        self.mode = mode
        self.value = value
        super().__init__(f"mode {mode}: singular denominator |w(A+B+w)| = {value:.3e}")


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class DimensionError(ParameterError):
    """Requested Fock space exceeds the configured dimension cap."""

    def __init__(self, dimension, cap):
        self.dimension = dimension
        self.cap = cap
        super().__init__(f"Hilbert-space dimension {dimension} exceeds cap {cap}")


class IntegrationError(NumericalError):
    """Time integration aborted (step underflow or non-finite state)."""
