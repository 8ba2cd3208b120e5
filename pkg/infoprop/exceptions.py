"""Error hierarchy shared by all infoprop modules."""


class InfopropError(Exception):
    """Base class for simulator errors"""


class DomainError(InfopropError, ValueError):
    """A value lies outside the domain of an operation"""


class ConfigurationError(InfopropError, ValueError):
    """Inconsistent matrices, parameters or clock settings"""


class ScenarioError(ConfigurationError):
    """Scenario file could not be parsed or cross-referenced"""


class InsufficientHistoryError(InfopropError):
    """A travel-time query falls outside the recorded cumulative curves"""


class UndefinedFitError(DomainError):
    """A goodness-of-fit statistic has a zero denominator"""


class InvariantViolation(InfopropError, AssertionError):
    """An internal invariant of the engine was broken"""
