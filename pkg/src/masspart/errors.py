"""Exception hierarchy shared by every masspart module."""


class MasspartError(ValueError):
    """Base class for all errors raised by masspart."""


class InvalidParameterError(MasspartError):
    pass


class EmptyInputError(MasspartError):
    pass


class NonFiniteInputError(MasspartError):
    pass


class ResidualTooLargeError(MasspartError):
    """Raised when size-biasing a partition whose residual mass is material."""


class TooFewSamplesError(MasspartError):
    pass


class NonMonotoneCdfError(MasspartError):
    pass


class LengthMismatchError(MasspartError):
    pass


class NonPositiveEntryError(MasspartError):
    pass


class UnknownRepresentationError(MasspartError):
    pass


class IncompatibleParamsError(MasspartError):
    """Raised when a representation cannot realize the requested parameters."""
