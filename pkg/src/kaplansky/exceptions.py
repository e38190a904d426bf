"""Exception hierarchy shared by every module of the package."""


class KaplanskyError(ValueError):
    """Base class for domain errors raised by this package."""


class DimensionMismatchError(KaplanskyError):
    pass


class InvalidPartitionError(KaplanskyError):
    pass


class NotSelfAdjointError(KaplanskyError):
    pass


class NotPositiveError(KaplanskyError):
    pass


class NotProjectionError(KaplanskyError):
    pass


class MalformedPartsError(KaplanskyError):
    pass


class NonFiniteError(KaplanskyError):
    pass


class NotSolvableError(KaplanskyError):
    pass


class ToleranceInconsistencyError(KaplanskyError):
    """A computed witness failed its own residual check."""


class SchemaError(KaplanskyError):
    """Input document does not follow the ``kaplansky/v1`` schema."""
