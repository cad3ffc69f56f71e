class RoughVolError(Exception):
    """Base class for numerical and precondition failures."""


class PreconditionError(RoughVolError, ValueError):
    pass


class QuadratureError(RoughVolError, ArithmeticError):
    pass


class BudgetError(RoughVolError):
    pass


class FactorizationError(RoughVolError, ArithmeticError):
    pass
