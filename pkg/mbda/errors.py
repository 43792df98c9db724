"""Exception hierarchy; the CLI maps each family to an exit code."""


class MbdaError(Exception):
    """Base for all pipeline errors."""


class ConfigError(MbdaError, ValueError):
    """Invalid configuration document or CLI usage against it."""


class DataError(MbdaError, ValueError):
    """Unreadable input, malformed interchange file or dimension mismatch."""


class CalibrationError(DataError):
    """Calibration data cannot support the requested model."""


class ModelError(MbdaError):
    """Degenerate or malformed PCA model."""
