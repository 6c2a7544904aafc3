"""Exception hierarchy for spcoclust."""


class SpCoClustError(Exception):
    """Base class for all package errors."""


class DatasetError(SpCoClustError, ValueError):
    """An expression dataset violates one of its invariants."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations is not None else [self]


class NonFiniteValue(DatasetError):
    def __init__(self, row, col):
        self.row = int(row)
        self.col = int(col)
        super().__init__(f"non-finite value at row {self.row}, column {self.col}")


class DuplicateColumnId(DatasetError):
    def __init__(self, col_id):
        self.col_id = col_id
        super().__init__(f"duplicate column id {col_id!r}")


class DimensionMismatch(SpCoClustError, ValueError):
    pass


class NonPositiveParameter(SpCoClustError, ValueError):
    pass


class NotPositiveSemidefinite(SpCoClustError, ArithmeticError):
    pass


class NotPositiveDefinite(SpCoClustError, ArithmeticError):
    pass


class StaleCache(SpCoClustError, RuntimeError):
    """A kernel eigen cache no longer matches the current column clusters."""


class SingleColumnCluster(SpCoClustError, ValueError):
    """Column moves need at least two column clusters."""


class OptimizerFailure(SpCoClustError, ArithmeticError):
    pass


class UndefinedMean(SpCoClustError, ValueError):
    pass


class InvalidLevel(SpCoClustError, ValueError):
    pass


class EmptyBlock(SpCoClustError, ValueError):
    pass


class DegreesOfFreedomTooSmall(SpCoClustError, ValueError):
    pass


class ConfigInvalid(SpCoClustError, ValueError):
    pass


class LengthMismatch(SpCoClustError, ValueError):
    pass


class TooShort(SpCoClustError, ValueError):
    pass


class ParseError(SpCoClustError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class UnknownSpotId(SpCoClustError, KeyError):
    def __init__(self, spot_id):
        self.spot_id = spot_id
        super().__init__(spot_id)

    def __str__(self):
        return f"unknown spot id {self.spot_id!r}"


class MissingCoordinate(SpCoClustError, KeyError):
    def __init__(self, spot_id):
        self.spot_id = spot_id
        super().__init__(spot_id)

    def __str__(self):
        return f"no coordinates for spot {self.spot_id!r}"
