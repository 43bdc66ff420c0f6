"""Exception types shared across the package."""


class CoexsimError(Exception):
    """Base class for all package errors."""


class InvalidParamsError(CoexsimError, ValueError):
    """Parameters violate a documented invariant or precondition."""


class SilentComponentError(CoexsimError, ValueError):
    """A signal component that must be power-scaled has zero power."""


class EmptyBandError(CoexsimError, ValueError):
    """Requested frequency band lies outside the representable spectrum."""


class TooShortInputError(CoexsimError, ValueError):
    """Input buffer shorter than one analysis frame."""


class DegenerateDatasetError(CoexsimError, ValueError):
    """Training dataset lacks both classes or is otherwise unusable."""


class DimensionMismatchError(CoexsimError, ValueError):
    """Feature vector length does not match the model input size."""


class EmptyExtentError(CoexsimError, ValueError):
    """Frequency extent has zero or negative width."""


class ProtocolViolationError(CoexsimError, RuntimeError):
    """Controller received input not permitted in its current mode."""


class MissingModelError(CoexsimError, FileNotFoundError):
    """A trained detector model is required but was not provided/found."""


class MissingDataError(CoexsimError, FileNotFoundError):
    """Expected dataset files are absent."""


class InvalidConfigError(CoexsimError, ValueError):
    """Scenario or tool configuration failed validation."""
