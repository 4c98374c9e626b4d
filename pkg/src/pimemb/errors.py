"""Exception types raised across the package."""


class PimError(Exception):
    """Base class for all errors raised by pimemb."""


class ConfigError(PimError, ValueError):
    """A configuration value violates its schema invariant.

    The message always starts with the dotted field name, e.g.
    ``cluster.tasklets: must be >= 1``.
    """


class TraceFormatError(PimError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(PimError, ValueError):
    """The table (or a piece of it) does not fit into DPU memory."""

    def __init__(self, message, required_dpus=None):
        self.required_dpus = required_dpus
        super().__init__(message)


class AlignmentError(PimError, ValueError):
    """MRAM read size is not 8-byte aligned or outside [8, 2048]."""


class CoverageError(PimError, KeyError):
    """An index in a batch or trace is not assigned by the plan."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""
