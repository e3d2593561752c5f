class KlidentError(Exception):
    """Base class for package errors."""


class LayoutError(KlidentError, ValueError):
    """Parameter vector does not match the model layout."""


class ConfigError(KlidentError, ValueError):
    """Invalid scenario, sensor or estimator configuration."""


class DivergenceError(KlidentError, ArithmeticError):
    """A simulation or filter produced non-finite or non-PD quantities."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class MetricError(KlidentError, ValueError):
    """Error metric undefined for the given reference values."""


class SelectionError(KlidentError):
    """No identification run is eligible for selection."""
