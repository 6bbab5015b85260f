"""Exception hierarchy shared across the package."""


class SmoothEBError(Exception):
    """Base class for all package errors."""


class DataError(SmoothEBError, ValueError):
    """Invalid user-supplied data (maps to CLI exit code 3)."""


class NumericalError(SmoothEBError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy answer (CLI exit 4)."""


class EmptyMixture(DataError):
    pass


class NegativeWeight(DataError):
    pass


class WeightSumError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, msg, offset=None):
        if offset is not None:
            msg = f"{msg} (at byte offset {offset})"
        super().__init__(msg)
        self.offset = offset


class SchemaError(DataError):
    pass


class EmptySample(DataError):
    pass


class NonFiniteData(DataError):
    pass


class ZeroSmoothing(DataError):
    """A continuous prior/posterior density was requested with c = 0."""


class GridMismatch(DataError):
    pass


class BudgetTooSmall(DataError):
    pass


class LengthOverflow(NumericalError):
    pass


class Numerics(NumericalError):
    """Simplex pivoting exceeded its iteration cap."""


class EtaTooLarge(DataError):
    pass


class SampleTooSmall(DataError):
    pass


class DegenerateFolds(DataError):
    pass


class GridTooCoarse(DataError):
    pass


class SplitTooSmall(DataError):
    pass
