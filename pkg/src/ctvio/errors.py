"""Exception hierarchy shared by every ctvio module."""


class CtvioError(Exception):
    """Base class for all library errors."""


class AngleNearPi(CtvioError, ValueError):
    """Rotation angle too close to pi for a unique logarithm."""


class DegenerateInterval(CtvioError, ValueError):
    """Two keyframes share (almost) the same timestamp."""


class TimestampMismatch(CtvioError, ValueError):
    pass


class InsufficientSamples(CtvioError, ValueError):
    pass


class SingularVandermonde(CtvioError, ValueError):
    pass


class UnobservableScale(CtvioError, ValueError):
    """Too little acceleration excitation to observe the metric scale."""


class EmptyInterval(CtvioError, ValueError):
    """An inter-keyframe interval carries no IMU sample."""


class RankDeficientConstraints(CtvioError, ValueError):
    pass


class IndefiniteSystem(CtvioError, ArithmeticError):
    """The damped Hessian is not positive definite; retry with more damping."""


class Diverged(CtvioError, RuntimeError):
    def __init__(self, message, keyframe_index=None):
        super().__init__(message)
        self.keyframe_index = keyframe_index


class OutOfRange(CtvioError, ValueError):
    pass


class ParseError(CtvioError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class NonMonotonicTime(CtvioError, ValueError):
    pass


class BadQuaternion(CtvioError, ValueError):
    pass


class NoMatches(CtvioError, ValueError):
    pass


class DegenerateGeometry(CtvioError, ValueError):
    pass


class ConfigError(CtvioError, ValueError):
    pass


class InitFailure(CtvioError, RuntimeError):
    """Initialization failed; ``stage`` names the step and ``cause`` the reason."""

    def __init__(self, stage, cause):
        super().__init__(f"initialization failed at {stage}: {cause}")
        self.stage = stage
        self.cause = cause
