"""Exception hierarchy shared by every module of the package."""


class BlockCGError(Exception):
    """Base class for all package errors."""


class ContractError(BlockCGError, ValueError):
    """A caller broke an operation's precondition (bad shape, bad index, ...)."""


class InputError(BlockCGError, ValueError):
    """Input data is unusable: infeasible point, non-finite matrix, bad parameter."""


class ConfigurationError(BlockCGError, ValueError):
    """Inconsistent solver / constants / rule configuration."""


class UnsupportedError(BlockCGError, NotImplementedError):
    """The requested operation is not available for this problem type."""


class NumericalFailure(BlockCGError, RuntimeError):
    """Non-finite objective or a runaway backtracking loop.

    ``trace`` holds whatever was recorded before the failure, if anything.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
