"""Exception types raised across the package."""


class SignSymError(Exception):
    """Base class for all package errors."""


class DimensionError(SignSymError, ValueError):
    pass


class RangeError(SignSymError, ValueError):
    pass


class NonFiniteError(SignSymError, FloatingPointError):
    pass


class ConfigError(SignSymError, ValueError):
    """Invalid configuration or incompatible head/loss/attack pairing."""


class StateError(SignSymError, RuntimeError):
    """Feedback state missing or not matching the network."""


class SpecError(SignSymError, ValueError):
    """Invalid attack specification."""


class StartNotFoundError(SignSymError, RuntimeError):
    """A decision-based attack found no adversarial starting point within budget."""


class DataFormatError(SignSymError, ValueError):
    """Malformed dataset, checkpoint or index file."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
