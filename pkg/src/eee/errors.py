"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes incompatible with the operation's contract."""


class StateError(RuntimeError):
    """Operation invoked on an object in an unusable state (empty buffer,
    missing tape, empty candidate set, ...)."""


class ValidationInputError(ValueError):
    """State rejected by the validation module before evaluation (non-finite
    entries, wrong dimension). The query counter is not incremented."""


class UndefinedRatioError(ZeroDivisionError):
    """A ratio whose numerator and denominator are both zero."""


class ProtocolError(RuntimeError):
    """External validator subprocess broke the line-delimited JSON protocol."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""
