"""Exception hierarchy shared across the package."""


class QapmError(Exception):
    """Base class for all package errors."""


class ParameterError(QapmError, ValueError):
    """An argument is outside its valid domain."""


class ShapeError(QapmError, ValueError):
    """Array shapes are incompatible."""


class NumericError(QapmError, ArithmeticError):
    """A non-finite or overflowing value was produced or supplied."""


class GenerationError(QapmError, RuntimeError):
    """A random generator exhausted its retry budget."""


class DegenerateInputError(QapmError, ValueError):
    """A quadratic-form denominator is zero or negative."""


class NotSPDError(QapmError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class ConfigError(QapmError, ValueError):
    """A configuration or checkpoint is inconsistent."""
