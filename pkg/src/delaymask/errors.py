"""Exception hierarchy for delaymask.

Every error raised on bad parameters or bad data derives from
``DelayMaskError`` (itself a ``ValueError``) so callers can catch the whole
family at once. The CLI maps each family to an exit code.
"""


class DelayMaskError(ValueError):
    """Base class for all delaymask errors."""


class ConfigError(DelayMaskError):
    """Inconsistent or invalid configuration."""


class DataError(DelayMaskError):
    """Malformed or insufficient input data."""


class InfeasibleError(DelayMaskError):
    """Parameters for which no valid answer exists."""


# distributions
class NonPositiveParam(ConfigError):
    pass


class EtaOutOfRange(InfeasibleError):
    pass


class UnsupportedSpec(ConfigError):
    pass


# mechanism
class UnsortedStream(DataError):
    pass


class MissingDeclaredFlag(DataError):
    pass


class EmptyClass(DataError):
    pass


# calibration
class InsufficientData(DataError):
    pass


class InfeasibleTarget(InfeasibleError):
    pass


class EmptyStream(DataError):
    pass


class ZeroDenominator(DataError):
    pass


# attacks
class EmptyTruth(DataError):
    pass


class MissingGroupGap(ConfigError):
    pass


# frontier
class InvalidLevel(ConfigError):
    pass


class SchemaError(DataError):
    """A record in an input file does not match the event schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
