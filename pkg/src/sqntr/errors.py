"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so callers (and the
command line) can treat them uniformly; bad inputs derive from the matching
builtin (``ValueError``, ``IndexError``, ``KeyError``).
"""


class SqntrError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(SqntrError, ArithmeticError):
    """A computation could not be completed in floating point."""


class RankDeficient(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class Singular(NumericalError):
    pass


class SingularMiddle(Singular):
    """The small middle matrix of a compact representation is singular."""


class SingularShift(Singular):
    """``gamma + sigma == 0``: the Sherman-Morrison-Woodbury path is undefined."""


class DegenerateQuotient(NumericalError):
    pass


class PoleHit(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class ZeroPrediction(NumericalError):
    pass


class HardCaseEigenvectorNotFound(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    """Training hit a NaN/inf loss; ``records`` holds the metrics logged so far."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


class ZeroStep(SqntrError, ValueError):
    pass


class DimensionMismatch(SqntrError, ValueError):
    pass


class EmptyBuffer(SqntrError, ValueError):
    pass


class IndexOutOfRange(SqntrError, IndexError):
    pass


class TooFewSamples(SqntrError, ValueError):
    pass


class PointMismatch(SqntrError, ValueError):
    pass


class MissingEval(SqntrError, KeyError):
    pass


class DatasetError(SqntrError):
    """Problems reading a dataset from disk."""


class BadMagic(DatasetError, ValueError):
    pass


class TruncatedFile(DatasetError, ValueError):
    pass


class CountMismatch(DatasetError, ValueError):
    pass


class DatasetMissing(DatasetError, FileNotFoundError):
    pass


class ConfigInvalid(SqntrError, ValueError):
    pass
