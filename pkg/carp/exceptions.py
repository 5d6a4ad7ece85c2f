"""
CARP exceptions and warnings.
"""


class CarpError(Exception):
    """
    Base class for all errors raised by ``carp``.
    """


class InvalidParameter(CarpError, ValueError):
    """
    A parameter was outside of its domain.

    For example, a multiplicative step-size ``t`` which does not exceed 1.
    """


class ParseError(CarpError, ValueError):
    """
    An input file could not be read as a rectangular numeric table.
    """


class DimensionError(CarpError, ValueError):
    """
    The data has too few rows or columns for the requested operation.
    """


class DegenerateError(CarpError, ValueError):
    """
    The input is degenerate: identical rows, or a fusion graph that is not
    connected.
    """


class ShapeError(CarpError, ValueError):
    """
    Matrices or iterate lists have inconsistent shapes.
    """


class LengthError(CarpError, ValueError):
    """
    Two partitions being compared do not label the same number of items.
    """


class RangeError(CarpError, ValueError):
    """
    A requested cluster count is outside ``1..n``.
    """


class UnsupportedNorm(CarpError, ValueError):
    """
    The fusion penalty only supports the l1, l2 and l-infinity norms.
    """


class NumericalError(CarpError, ArithmeticError):
    """
    A factorization failed or an iterate stopped being finite.
    """


class DivergenceError(NumericalError):
    """
    The AMA iterates blew up, or its step exceeds the stability bound.
    """


class IterationCapError(CarpError, RuntimeError):
    """
    A path hit its iteration cap before reaching full fusion.
    """


class IncompleteEventsError(CarpError, ValueError):
    """
    A list of fusion events does not describe ``n - 1`` net merges.
    """


class CarpWarning(UserWarning):
    """
    Base class for warnings issued by ``carp``.
    """


class MaxIterWarning(CarpWarning):
    """
    An exact solve stopped at ``max_iter`` before meeting its tolerance.
    """


class ConstantColumnWarning(CarpWarning):
    """
    A column with zero variance was centered but not scaled.
    """


class BacktrackExhausted(CarpWarning):
    """
    Back-tracking could not isolate a single fusion within ``max_backtrack``
    halvings; the fusions were accepted together.
    """
