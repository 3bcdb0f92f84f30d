"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a precondition (negative mass, bad exponent, ...)."""


class CapacityError(ValueError):
    """An exact enumeration was requested beyond the configured instance cap."""


class DomainError(ValueError):
    """Parameters fall outside the domain of validity of a bound or formula."""
