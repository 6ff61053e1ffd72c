"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or conflicting configuration (bad key file, duplicate IDs...)."""


class CounterOverflowError(OverflowError):
    """Local message counter exhausted; the session key must be rotated."""


class FramingError(RuntimeError):
    """Symbol stream cannot be framed (no delimiters, short batch...)."""


class PartialFrameError(RuntimeError):
    """Carrier stream ended in the middle of an auth frame."""

    def __init__(self, position, message=None):
        self.position = position
        super().__init__(message or f"carrier stream exhausted at bit {position}")


class TraceParseError(ValueError):
    """Trace file is unreadable or has too many malformed lines."""


class SchedConvergenceError(RuntimeError):
    """Response-time recurrence did not converge (overloaded bus)."""
