"""Exception types shared across the package."""


class ContractError(ValueError):
    """Arguments violate an operation's preconditions."""


class TruncationError(RuntimeError):
    """An infinite product could not be truncated within the depth budget."""


class ResolutionError(RuntimeError):
    """A radius, grid or quadrature is too coarse (or too fine) to honour the tolerance."""


class CapacityError(RuntimeError):
    """A computation would exceed an exactness or size bound."""


class NotInSupportError(ValueError):
    """The point carries no mass at the largest radius."""


class SymmetryViolationError(ValueError):
    """A value expected to be real came out with a non-negligible imaginary part."""


class UnsupportedModelError(TypeError):
    """The measure model does not provide the requested oracle."""


class PreconditionError(ValueError):
    """An experiment's mathematical precondition failed on the supplied data.

    ``offending`` lists the parameters (radii, planes, ...) that failed.
    """

    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)
