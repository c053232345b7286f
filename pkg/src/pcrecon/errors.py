"""Exception hierarchy shared by every pcrecon module.

The CLI maps these onto exit codes: ``UsageError`` -> 1, any other
``PcreconError`` -> 2, ``NumericalError`` -> 3.
"""


class PcreconError(Exception):
    """Base class for all toolkit errors."""


class UsageError(PcreconError, ValueError):
    """Bad arguments or configuration values."""


class DataError(PcreconError):
    """Input data could not be used."""


class ParseError(DataError):
    pass


class EmptyCloud(DataError):
    pass


class DegenerateFace(DataError):
    def __init__(self, face_index, message=None):
        self.face_index = face_index
        super().__init__(message or f"face {face_index} has zero area")


class DegenerateCloud(DataError):
    pass


class InvalidPose(DataError):
    pass


class EmptyMesh(DataError):
    pass


class MissingPair(DataError):
    pass


class CheckpointError(DataError):
    pass


class NonPositiveTau(UsageError):
    pass


class NotPerfectSquare(UsageError):
    pass


class ShapeMismatch(PcreconError, ValueError):
    pass


class NumericalError(PcreconError):
    pass


class DivergedLoss(NumericalError):
    def __init__(self, step, loss):
        self.step = step
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss!r}) at step {step}")
