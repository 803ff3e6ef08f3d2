"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its documented range."""


class DomainError(ValueError):
    """A point or weight/map combination violates the domain contract."""


class StructuralError(ValueError):
    """Mismatched or degenerate inputs (wrong grid, empty batch, zero measure)."""


class ResourceError(RuntimeError):
    """A configured size or budget guard was exceeded."""


class NumericalError(RuntimeError):
    """A computation produced non-finite or otherwise unusable values."""


class NoConvergenceError(NumericalError):
    """An iterative procedure exhausted its budget; carries the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
