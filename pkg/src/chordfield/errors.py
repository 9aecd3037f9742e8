"""Exception types shared by every module in the package."""


class DomainError(ValueError):
    """An input lies outside the documented domain of an operation."""


class IllConditionedMapError(ArithmeticError):
    """A comparison-domain coefficient divisor fell below the schedule floor.

    Raised instead of silently returning a blown-up value when alpha(t) or
    sigma(t) is smaller than ``Schedule.alpha_floor`` for a coefficient kind
    whose formula divides by it.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegeneratePosteriorError(ArithmeticError):
    """Every mixture responsibility underflowed (raw mass below 1e-300)."""


class DivergenceError(ArithmeticError):
    """An integration state became non-finite or left the bounded regime.

    ``last_state`` holds the last finite state reached before the abort.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state
