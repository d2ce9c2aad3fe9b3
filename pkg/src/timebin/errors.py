"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems -> 1, I/O -> 2,
undefined estimates -> 3.
"""


class TimebinError(Exception):
    """Base class for all package-specific errors."""


class LayoutError(TimebinError):
    """Register layouts or operator dimensions do not match."""


class ContractError(TimebinError):
    """A caller violated an operation's precondition."""


class ConfigurationError(TimebinError):
    """Invalid or inconsistent configuration values."""


class ParseError(TimebinError):
    """Malformed input file (config or time-tag CSV)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UndefinedEstimateError(TimebinError):
    """An estimator has no data to work with (e.g. zero post-selected events)."""
