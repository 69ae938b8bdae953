"""Exception types shared across the library."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition (shape, range, membership)."""


class CapacityError(ValueError):
    """Problem size exceeds what an exact/enumerative routine is rated for."""


class NumericalError(RuntimeError):
    """A numerical factorization or decomposition failed beyond recovery."""


class DivergenceError(RuntimeError):
    """An iterative solver produced a non-finite iterate."""

    def __init__(self, iterate: int, message: str | None = None):
        self.iterate = iterate
        super().__init__(message or f"non-finite objective at iterate {iterate}")


class RatingsParseError(ValueError):
    """A ratings file line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class DuplicateRatingError(ValueError):
    """The same (user, item) pair appears more than once in a ratings source."""


class ConfigError(ValueError):
    """A run configuration is malformed, incomplete, or references missing paths."""
