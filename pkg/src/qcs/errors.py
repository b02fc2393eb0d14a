"""Exception hierarchy shared by all qcs modules."""


class QcsError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigError(QcsError, ValueError):
    """A configuration value is out of its allowed range."""


class InvalidParameterError(QcsError, ValueError):
    """A numerical parameter is outside the domain of a model."""


class CorruptPayloadError(QcsError, ValueError):
    """A quantized payload or its byte stream is malformed."""


class GenerationFailureError(QcsError, RuntimeError):
    """Random generation could not satisfy its constraints."""


class IllConditionedError(QcsError, ArithmeticError):
    """A matrix factorization failed or was numerically singular."""


class UndefinedMetricError(QcsError, ValueError):
    """A metric is undefined for the given input."""


class DataError(QcsError, ValueError):
    """Input data is malformed or inconsistent."""
