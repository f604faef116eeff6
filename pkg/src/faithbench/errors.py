class FaithbenchError(Exception):
    """Base class for every error raised by the engine."""


class SchemaError(FaithbenchError):
    pass


class LabelError(FaithbenchError):
    pass


class IntegrityError(FaithbenchError):
    pass


class SpecError(FaithbenchError):
    pass


class TrainingError(FaithbenchError):
    pass


class ShapeError(FaithbenchError, ValueError):
    pass


class ParseError(FaithbenchError):
    pass


class BaselineUnavailable(FaithbenchError):
    pass


class NumericalError(FaithbenchError):
    pass


class TableImportError(FaithbenchError):
    pass


class ConfigError(FaithbenchError):
    pass


class MetricError(FaithbenchError):
    pass


class IncompleteGridError(FaithbenchError):
    pass
