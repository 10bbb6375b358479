"""Exception hierarchy shared by every module."""


class ScalingError(Exception):
    """Base class for all errors raised by linescale."""


class DomainError(ScalingError, ValueError):
    """An argument or input matrix violates an operation's precondition."""


class InfeasibleError(DomainError):
    """A marginal cannot be met because the kernel has a null line."""


class InvariantViolation(ScalingError, RuntimeError):
    """An internal invariant failed; this indicates a bug or numerical breakdown."""


class NumericError(ScalingError, ArithmeticError):
    """An iterative numerical routine did not converge."""


class Inconclusive(ScalingError):
    """A comparison could not be decided within the given step budget."""


class ScheduleExhausted(ScalingError):
    """A finite trace schedule has no more steps."""
