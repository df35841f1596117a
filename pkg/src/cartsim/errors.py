"""Exception types raised by the library."""


class CartsimError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CartsimError, ValueError):
    """A value is non-finite, negative where it must not be, or malformed."""


class DegenerateParameterError(CartsimError, ValueError):
    """A parameter value makes the requested quantity undefined (e.g. b = 0)."""


class PreconditionError(CartsimError, ValueError):
    """An operation's modelling assumption does not hold (e.g. phi >= rho)."""


class IntegrationError(CartsimError, RuntimeError):
    """Time stepping failed.

    ``time`` is the simulation time (days) at which the failure occurred.
    """

    def __init__(self, message, time):
        super().__init__(f"{message} (t = {time:.6g} d)")
        self.time = time


class StiffnessError(IntegrationError):
    """Adaptive step size fell below the configured minimum."""


class NegativeStateError(IntegrationError):
    """A population went more negative than the clamping tolerance allows."""
