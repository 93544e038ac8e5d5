"""Exception types shared across the package.

Every error carries a machine-readable ``kind`` (the class name) so the CLI can
emit structured error JSON, plus an ``exit_code`` grouping: 1 for validation
problems (bad input data, bad config), 2 for runtime failures.
"""


class DiffsubError(Exception):
    """Base class for all package errors."""

    exit_code = 2

    @property
    def kind(self) -> str:
        return type(self).__name__


class ValidationError(DiffsubError):
    exit_code = 1


# data
class SchemaMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyGroup(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


# rules
class NonPositiveTemperature(ValidationError):
    pass


class AllWeightsZero(DiffsubError):
    pass


class DimensionMismatch(ValidationError):
    pass


# densities
class ZeroTotalWeight(DiffsubError):
    pass


class UnfittedEstimator(DiffsubError):
    pass


# forest
class TaskMismatch(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


# objective
class StaleDensities(DiffsubError):
    pass


# trainer
class NonFiniteLoss(DiffsubError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class EmptySubgroupInGroup(DiffsubError):
    pass


# evaluation
class LengthMismatch(ValidationError):
    pass


class MissingTruth(ValidationError):
    pass


# synthetic data generation
class CoverageCalibrationFailure(DiffsubError):
    pass
