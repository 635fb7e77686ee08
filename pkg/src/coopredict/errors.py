"""Exception hierarchy.

Everything raised deliberately by the toolkit derives from ``CoopredictError``.
The two intermediate bases decide the CLI exit code: ``DataError`` (bad
input, exit 2) and ``NumericError`` (a computation that cannot proceed,
exit 3).
"""
from __future__ import annotations


class CoopredictError(Exception):
    """Base class for all toolkit errors."""


class DataError(CoopredictError, ValueError):
    """Input data violates a domain or schema rule."""


class NumericError(CoopredictError, ArithmeticError):
    """A numerical procedure failed or is undefined on its input."""


# core
class OrderingViolation(DataError):
    pass


class MixedInequalityViolation(DataError):
    pass


class DegenerateScale(NumericError):
    pass


class InfeasibleRatios(DataError):
    pass


class InvalidLength(DataError):
    pass


# features / behavior
class MissingHistory(DataError):
    pass


class MissingRng(DataError):
    pass


class EmptyTrainingSlice(DataError):
    pass


class EmptyGrid(DataError):
    pass


# glm
class Separation(NumericError):
    pass


class RankDeficient(NumericError):
    pass


class NotConverged(NumericError):
    pass


class SingularInformation(NumericError):
    pass


class SchemaMismatch(DataError):
    pass


# evaluation
class BadK(DataError):
    pass


class UndefinedCorrelation(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class NoPriorCooperation(DataError):
    pass


# sensitivity
class BadN(DataError):
    pass


class DegenerateRanks(NumericError):
    pass


class RankDeficientRegression(NumericError):
    pass


# io
class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class DomainError(DataError):
    pass


class DuplicateId(DataError):
    pass


class SchemaVersionMismatch(DataError):
    pass


class CorruptFile(DataError):
    pass
