"""Exception taxonomy shared across the package."""


class DCSolverError(Exception):
    """Base class for all errors raised by this package."""


class RangeError(DCSolverError, ValueError):
    """A time or argument fell outside the schedule's valid range."""


class ConfigError(DCSolverError, ValueError):
    """Invalid, inconsistent, or unknown configuration."""


class ContractError(DCSolverError, ValueError):
    """A documented precondition of an operation was violated."""


class WarmupError(DCSolverError):
    """A multistep operation was asked for more history than the buffer holds."""


class SearchError(DCSolverError):
    """The compensation-ratio search hit a non-finite loss or empty candidate set."""


class FitError(DCSolverError):
    """Regression fit failed; message names the deficient feature axis when known."""


class RemoteError(DCSolverError):
    """Base class for remote-denoiser client failures."""


class ConnectionFailure(RemoteError):
    """Could not reach or keep a connection to the remote endpoint."""


class VersionMismatch(RemoteError):
    """The peer spoke a different protocol version (bad magic)."""


class DimensionMismatch(RemoteError):
    """The server's model dimension does not match the request payload."""


class ProtocolError(RemoteError):
    """Malformed frame, empty batch, or otherwise unusable wire data."""


class ServerError(RemoteError):
    """The server answered with a non-ok status."""

    def __init__(self, status: int, message: str):
        super().__init__(f"server status {status}: {message}")
        self.status = status
        self.message = message
