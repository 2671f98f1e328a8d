"""Exception hierarchy shared by all liftgeo modules."""


class LiftGeoError(Exception):
    """Base class for every error raised by liftgeo."""


class DegeneratePose(LiftGeoError):
    pass


class BehindCameraPlane(LiftGeoError):
    pass


class ShapeMismatch(LiftGeoError, ValueError):
    pass


class BatchTooSmall(LiftGeoError, ValueError):
    pass


class GraphNotRecorded(LiftGeoError):
    pass


class SequenceRequired(LiftGeoError):
    pass


class PairMismatch(LiftGeoError, ValueError):
    pass


class ConfigInvalid(LiftGeoError, ValueError):
    pass


class DataMissing(LiftGeoError):
    pass


class ParseError(LiftGeoError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class JointCountError(ParseError):
    pass


class DegenerateTarget(LiftGeoError):
    pass


class ZeroLimb(LiftGeoError):
    pass


class EmptySet(LiftGeoError, ValueError):
    pass


class CheckpointMismatch(LiftGeoError):
    pass


class IdMismatch(LiftGeoError):
    pass


class NumericFailure(LiftGeoError, FloatingPointError):
    pass
