"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``FormatError`` -> 3,
``FitError`` (and subclasses) -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value. ``path`` is the dotted field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)

    def prefixed(self, prefix: str) -> "ConfigError":
        path = f"{prefix}.{self.path}" if self.path else prefix
        return ConfigError(path, self.message)


class FormatError(ValueError):
    """Malformed tag file or histogram CSV."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsortedInputError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


class InsufficientSidebandError(NormalizationError):
    pass


class ZeroFlatLevelError(NormalizationError):
    pass


class FitError(RuntimeError):
    pass


class ConvergenceError(FitError):
    pass


class DegenerateDataError(FitError):
    pass


class CalibrationError(FitError):
    pass
