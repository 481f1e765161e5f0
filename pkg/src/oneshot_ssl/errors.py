"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid configuration value or combination."""


class DimensionError(EngineError):
    """Tensor shape mismatch."""


class NumericDivergenceError(EngineError):
    """A computation produced NaN or Inf."""


class UsageError(EngineError):
    """API called out of order (e.g. backward before forward)."""


class ScheduleExhaustedError(EngineError):
    """Optimizer stepped past its total step budget."""


class DataError(EngineError):
    """Invalid data content (bad label, empty input, ...)."""


class FormatError(EngineError):
    """Malformed binary file."""


class ValidationError(EngineError):
    """Invalid prototype set or related user input."""


class SequencingError(EngineError):
    """Workflow step attempted before its prerequisite exists."""
