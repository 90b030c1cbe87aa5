"""Exception hierarchy shared by every module."""


class ExclusiveLassoError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ExclusiveLassoError, ValueError):
    pass


class NotPositiveDefinite(ExclusiveLassoError, ValueError):
    pass


class NonConvergence(ExclusiveLassoError, RuntimeError):
    pass


class InvalidPartition(ExclusiveLassoError, ValueError):
    """Raised when a group partition is not a disjoint cover of the columns."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class OverlappingGroups(InvalidPartition):
    pass


class MissingIndices(InvalidPartition):
    pass


class EmptyGroup(InvalidPartition):
    pass


class NonFiniteEncountered(ExclusiveLassoError, FloatingPointError):
    pass


class EmptySupport(ExclusiveLassoError, ValueError):
    pass


class AllGroupsZero(ExclusiveLassoError, ValueError):
    pass


class SingularSystem(ExclusiveLassoError, ValueError):
    pass


class PerfectFit(ExclusiveLassoError, ValueError):
    """Residual sum of squares is zero, so log-RSS criteria diverge."""


class NoFiniteCriterion(ExclusiveLassoError, ValueError):
    pass


class EmptyPath(ExclusiveLassoError, ValueError):
    pass


class PathFitError(ExclusiveLassoError):
    """Wraps a failure of a single fit along a regularization path."""

    def __init__(self, lam, cause):
        super().__init__(f"fit failed at lambda={lam!r}: {cause}")
        self.lam = lam
        self.cause = cause


class ReplicateError(ExclusiveLassoError):
    def __init__(self, replicate, cause):
        super().__init__(f"replicate {replicate} failed: {cause}")
        self.replicate = replicate
        self.cause = cause


class DataFileError(ExclusiveLassoError, ValueError):
    """Malformed input file; carries the path and the offending line."""

    def __init__(self, message, path=None, line=None, column=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
        self.column = column


class RaggedRow(DataFileError):
    pass


class NonNumeric(DataFileError):
    pass


class EmptyFile(DataFileError):
    pass


# Warnings for conditions where a usable result is still returned.


class ConvergenceWarning(UserWarning):
    pass


class MaxSweepsExceeded(ConvergenceWarning):
    pass


class MaxIterationsExceeded(ConvergenceWarning):
    pass


class SelectorFallback(UserWarning):
    """A baseline selector could not meet its rule and fell back."""


class NoFullCoverageLambda(SelectorFallback):
    pass


class GroupNeverEnters(SelectorFallback):
    pass


class IndefiniteCovariance(UserWarning):
    """A requested covariance is not PSD; the nearest PSD matrix was used."""
