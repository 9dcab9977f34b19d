"""Exceptions raised by presymplectic_strata.

Each error also derives from the builtin category it refines, so callers that only
care about ``ValueError`` or ``ArithmeticError`` keep working.
"""

from collections.abc import Sequence


class StrataError(Exception):
    """Base class for every error raised by the package."""


class ChartMismatchError(StrataError, ValueError):
    pass


class DegenerateFormError(StrataError, ValueError):
    def __init__(self, message: str, block: Sequence[int] | None = None):
        super().__init__(message)
        self.block = tuple(block) if block is not None else None


class NotClosedError(StrataError, ValueError):
    pass


class IndeterminateRankError(StrataError, ArithmeticError):
    def __init__(self, message: str, singular_values: Sequence[float] = ()):
        super().__init__(message)
        self.singular_values = tuple(singular_values)


class RankJumpError(StrataError, ValueError):
    def __init__(self, message: str, witness: Sequence | None = None):
        super().__init__(message)
        self.witness = tuple(witness) if witness is not None else None


class NonPolynomialKernelError(StrataError, ValueError):
    pass


class NotPoissonError(StrataError, ValueError):
    """``[P, P]`` does not vanish to the tracked accuracy."""


class AccuracyExhaustedError(StrataError, ArithmeticError):
    def __init__(self, message: str, requested: int | None = None, available=None):
        super().__init__(message)
        self.requested = requested
        self.available = available


class KernelInclusionError(StrataError, ValueError):
    def __init__(self, message: str, witness: Sequence | None = None):
        super().__init__(message)
        self.witness = tuple(witness) if witness is not None else None


class SingularSystemError(StrataError, ArithmeticError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class QuadratureError(StrataError, RuntimeError):
    pass


class ManifestError(StrataError, ValueError):
    """Manifest load failure, located by 1-based line and column."""

    def __init__(
        self,
        message: str,
        line: int | None = None,
        column: int | None = None,
        expected: Sequence[str] = (),
    ):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        location = f"line {line}, col {column}: " if line is not None else ""
        super().__init__(f"{location}{message}")
