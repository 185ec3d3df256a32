class DataValidationError(ValueError):
    """Input data (observations, adjacency, summaries, GeoJSON) violates a documented invariant."""


class NumericalError(ArithmeticError):
    """Numerical failure: a non-finite log-likelihood or a precision matrix that cannot be factorized."""
