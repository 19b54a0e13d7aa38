"""Exception hierarchy shared by every sharkov module."""

from typing import Optional


class SharkovError(Exception):
    """Base class for all errors raised by the package."""


class InvalidArgumentError(SharkovError, ValueError):
    """An argument is outside the operation's precondition."""


class DomainError(SharkovError):
    """A point lies outside the domain of a map."""


class DomainMismatchError(SharkovError):
    """Two maps that must share a domain do not."""


class InvarianceError(SharkovError):
    """An orbit or an interval image escaped the domain [a, b]."""

    def __init__(self, message: str, point: Optional[float] = None, index: Optional[int] = None):
        super().__init__(message)
        self.point = point
        self.index = index


class NoShadowError(SharkovError):
    """The hypernumber has no shadow inside the representable fragment."""


class NoReturnError(SharkovError):
    """A neighborhood did not return to itself within the time budget."""


class NoWitnessError(SharkovError):
    """No point y with y and f^R(y) in the neighborhood could be located."""


class DisplacementTooLargeError(SharkovError):
    """The return gap of a witness exceeds the perturbation budget."""


class ScheduleUnderflowError(SharkovError):
    """An eta iterate fell below the representable floor."""


class NoDataError(SharkovError):
    """An operation received an empty sample."""


class ConfigError(SharkovError):
    """A configuration file or value is invalid."""
