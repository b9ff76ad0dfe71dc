"""Exception hierarchy used across the package."""


class RobustStockError(Exception):
    """Base class for all package errors."""


class MalformedInputError(RobustStockError, ValueError):
    """Input violates a structural invariant (alpha > beta, sigma < 0, ...)."""


class EmptyMomentSetError(RobustStockError, ValueError):
    """The requested moment set has no member distribution."""


class UnsupportedParametersError(RobustStockError, ValueError):
    """Closed form does not cover these parameters; use the moment oracle."""


class NotApplicableError(RobustStockError, ValueError):
    """Hypotheses of a closed-form result fail for this instance."""


class OutOfRangeError(RobustStockError, ValueError):
    """Argument outside the domain where a routine is defined."""


class InfeasibleGridError(RobustStockError):
    """Moment constraints cannot be met by masses on the current grid."""


class GridResolutionError(RobustStockError):
    """Discretised dual problem is unbounded or the grid is too coarse."""


class PolicyDomainError(RobustStockError, KeyError):
    """A tabular policy was queried at an inventory level it does not cover."""

    def __str__(self):
        return str(self.args[0]) if self.args else "policy domain error"


class NotSupportedError(RobustStockError):
    """Requested computation is outside the supported problem class."""


class ParseError(MalformedInputError):
    """Instance or config text could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(loc + message)
