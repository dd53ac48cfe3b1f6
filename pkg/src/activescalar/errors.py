"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ValidationError(ValueError):
    """Parameters violate a structural invariant (e.g. a non-concave modulus)."""


class QuadratureError(ArithmeticError):
    """An adaptive integration failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BlowUpError(ArithmeticError):
    """The solver produced non-finite values."""

    def __init__(self, message, t, records=None):
        super().__init__(message)
        self.t = t
        self.records = list(records or [])
