"""Exception types raised across the package."""


class PlamError(Exception):
    """Base class for all package errors."""


class TooFewDistinctValues(PlamError):
    """A variable has too few distinct values to carry a spline basis."""


class SingularSystem(PlamError):
    """A penalized normal matrix is numerically singular."""


class NoConvergence(PlamError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class EmptyModel(PlamError):
    pass


class SchemaMismatch(PlamError):
    pass


class UnknownVariable(PlamError):
    pass


class ZeroVarianceColumn(PlamError):
    pass


class ConcurvityViolation(PlamError):
    pass


class NoValidReduction(PlamError):
    pass


class LengthMismatch(PlamError):
    pass


class SingleClass(PlamError):
    pass


class EmptyRelevant(PlamError):
    pass


class SingularGram(PlamError):
    pass


class DataError(PlamError):
    """Problems with an input table (missing target, bad cells, empty file)."""


class MissingTarget(DataError):
    pass


class NonNumericCell(DataError):
    pass


class EmptyFile(DataError):
    pass


class ConfigError(PlamError):
    pass


class RankDeficient(UserWarning):
    """Least squares design without full column rank; some coefficients pinned to zero."""


class DegenerateSplit(UserWarning):
    """A PLTR tree found no admissible split; its indicator is skipped."""
