"""Exception hierarchy shared across the package."""


class LogiclsError(Exception):
    """Base class for all errors raised by this package."""


class SceneError(LogiclsError):
    pass


class SceneParseError(SceneError):
    """Scene or manifest file is not well-formed JSON."""


class SceneValidationError(SceneError):
    """A scene violates one of its structural invariants."""


class GenerationError(LogiclsError):
    pass


class UnknownViolationError(GenerationError):
    pass


class UnsatisfiableError(GenerationError):
    """The generator could not realize the requested violation set."""


class CompileError(LogiclsError):
    pass


class EvaluationError(LogiclsError):
    pass


class AggregationError(LogiclsError):
    pass


class ResponseFormatError(LogiclsError):
    """A model response could not be turned into an answer value."""


class TagParseError(ResponseFormatError):
    pass


class CoercionError(ResponseFormatError):
    pass


class ValueOutOfSetError(CoercionError):
    pass


class TransportError(LogiclsError):
    pass


class MetricsError(LogiclsError):
    pass


class AugmentError(LogiclsError):
    pass


class ResampleError(LogiclsError):
    pass
