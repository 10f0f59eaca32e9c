"""Exception hierarchy shared by every capflp module."""


class CapFLPError(ValueError):
    """Base class for all capflp errors."""


class EmptyInstance(CapFLPError):
    pass


class NonFiniteValue(CapFLPError):
    pass


class IndexOutOfRange(CapFLPError):
    pass


class NotDivisible(CapFLPError):
    pass


class InvalidPlacement(CapFLPError):
    pass


class InfeasibleCapacities(CapFLPError):
    pass


class InstanceTooLarge(CapFLPError):
    pass


class WrongParity(CapFLPError):
    pass


class MechanismPreconditionViolated(CapFLPError):
    pass


class SearchBudgetExceeded(CapFLPError):
    pass


class InstanceFormatError(CapFLPError):
    """Raised when an instance file cannot be parsed."""
