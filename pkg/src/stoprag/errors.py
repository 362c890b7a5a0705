class StopRagError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(StopRagError, ValueError):
    pass


class OutOfRangeError(StopRagError, IndexError):
    pass


class ConfigError(StopRagError):
    pass


class PipelineError(StopRagError):
    """A pipeline call failed after exhausting retries.

    ``partial`` carries whatever trace was accumulated before the failure,
    for diagnostics only.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NumericError(StopRagError, ArithmeticError):
    pass
