"""Exception hierarchy shared by all modules."""


class SparsedomError(Exception):
    pass


# dyadic
class DepthExceeded(SparsedomError):
    pass


class RootHasNoParent(SparsedomError):
    pass


class IntervalTooLong(SparsedomError):
    pass


# signal
class EmptyCube(SparsedomError):
    pass


class NonconvergentBisection(SparsedomError):
    pass


class PointOutsideCube(SparsedomError):
    pass


# operators
class EpsilonBelowResolution(SparsedomError):
    pass


class DivergentSum(SparsedomError):
    pass


# sparse
class NotDyadic(SparsedomError):
    pass


class CalibrationFailure(SparsedomError):
    pass


class ResolutionFloor(CalibrationFailure):
    pass


# harness
class InvalidConfig(SparsedomError):
    pass


class InsufficientRange(SparsedomError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateFit(SparsedomError):
    pass


class IoFailure(SparsedomError):
    pass
