"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid networks, slices, protocols or config files.

    ``location`` optionally carries a human-readable pointer into the
    offending input (e.g. ``"line 12, slices[1].protocol"``).
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class UsageError(ValueError):
    """Raised when an operation is called in a way it does not support."""


class SimulationAborted(RuntimeError):
    """Raised when a trial exceeds its slot cap."""
