"""Exception hierarchy.

Each exception carries an ``exit_code`` used by the command line driver:
2 for configuration / input problems, 3 for numerical failures and 4 for
violations of the modelling assumptions (tangential or repeated crossings).
"""


class HkcrossError(Exception):
    """Base class for all package errors."""

    exit_code = 3

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


class ConfigError(HkcrossError):
    exit_code = 2


class InvalidInputError(HkcrossError, ValueError):
    exit_code = 2


class DivergenceError(HkcrossError):
    """Non-finite state met while integrating; ``last_time`` is the last good time."""

    def __init__(self, message: str, last_time: float, **context):
        super().__init__(message, last_time=last_time, **context)
        self.last_time = last_time


class CausticError(HkcrossError):
    pass


class BranchError(HkcrossError):
    """Square-root branch could not be followed (argument jump too large)."""


class DegenerateCrossingError(HkcrossError):
    pass


class DegenerateWidthError(HkcrossError):
    pass


class TruncationError(HkcrossError):
    pass


class UnsupportedDegreeError(HkcrossError):
    pass


class ResolutionError(HkcrossError):
    """Grid cannot resolve the requested dynamics (treated as a config problem)."""

    exit_code = 2


class AssumptionViolation(HkcrossError):
    exit_code = 4


class TangencyError(AssumptionViolation):
    pass


class WellPreparedViolation(AssumptionViolation):
    """A trajectory meets the crossing set a second time inside the window."""


class CollarError(AssumptionViolation):
    pass
