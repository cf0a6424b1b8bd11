class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class GridMismatchError(ValueError):
    """Two inputs live on incompatible time grids."""


class FactorizationError(ArithmeticError):
    """A covariance or kernel matrix could not be factorized or inverted."""


class RegimeError(ArithmeticError):
    """Parameters violate an inequality that a bound or series requires."""


class BudgetError(ValueError):
    """Requested size exceeds the combinatorial or memory budget."""


class NonFiniteStateError(FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")
