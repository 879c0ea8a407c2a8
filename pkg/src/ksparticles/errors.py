"""Exception hierarchy shared by every module of the package."""


class KSError(Exception):
    """Base class for all domain errors raised by ksparticles."""


class DomainError(KSError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class SingularConfigurationError(DomainError):
    """Two particles coincide where the exact interaction is singular."""


class DegenerateConfigurationError(DomainError):
    """All particles coincide, so spherical coordinates are undefined."""


class NumericalBlowupError(KSError, ArithmeticError):
    """A simulation produced a non-finite state.

    ``last_frame`` holds the last finite configuration and ``time`` its time.
    """

    def __init__(self, message, last_frame=None, time=None):
        super().__init__(message)
        self.last_frame = last_frame
        self.time = time


class ConfigError(KSError, ValueError):
    """An experiment configuration is malformed; the message names the key."""


class ResultsError(KSError, OSError):
    """Persisted results are missing, corrupt or inconsistent."""
