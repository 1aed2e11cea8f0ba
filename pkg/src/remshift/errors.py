"""Exception hierarchy shared by every module."""


class RemError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RemError, ValueError):
    """Invalid model, risk-set, or run configuration."""


class NumericError(RemError, ArithmeticError):
    """A non-finite value appeared where a finite one is required.

    Parameters
    ----------
    message : str
    term : str, optional
        Name of the offending term, when known.
    """

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class DegenerateProcessError(RemError):
    """The total event rate vanished so no further event can occur."""


class TruncationError(RemError):
    """Simulation hit ``max_time`` before producing the requested events.

    The partial realization is kept on ``events`` so callers can inspect or
    reuse it.
    """

    def __init__(self, message, events=None):
        super().__init__(message)
        self.events = events


class DegenerateCovariateError(RemError, ValueError):
    """A covariate has zero variance and cannot carry a basis."""


class IngestionError(RemError, ValueError):
    """Input data could not be parsed or validated."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows or [])


class UnsupportedConfigurationError(ConfigurationError):
    """A valid option combination that this package does not implement."""


class ParameterError(RemError, ValueError):
    """A numeric parameter lies outside its admissible range."""


def check_keys(cls, d, what):
    """Raise :class:`ConfigurationError` if ``d`` has keys that are not fields of ``cls``."""
    from dataclasses import fields

    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigurationError(f"unknown {what} keys: {sorted(unknown)}")
