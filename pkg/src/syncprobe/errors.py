"""Exception hierarchy shared across the toolkit."""


class ProbeError(Exception):
    """Base class for all syncprobe errors."""


class CounterUnavailableError(ProbeError):
    """No hardware cycle counter is accessible on this platform."""


class CalibrationError(ProbeError):
    """Clock or profile calibration failed (zero elapsed time, inconsistent targets)."""


class BackendOpenError(ProbeError):
    """A backend could not be opened (unwritable path, unknown profile, no syncfs)."""


class BackendIoError(ProbeError):
    """A backend system call failed; carries the OS error when available."""

    def __init__(self, message, errno=None):
        super().__init__(message)
        self.errno = errno


class AnalysisError(ProbeError):
    """Trace analysis refused its input (too short, degenerate, zero variance)."""


class ChannelError(ProbeError):
    """Covert channel framing failed (start code not found, bad config)."""
