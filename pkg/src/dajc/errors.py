class DajcError(Exception):
    """Base class for errors raised by this package."""


class FormatError(DajcError, ValueError):
    """Malformed PGM file, stream, or calibration file."""


class ConfigError(DajcError, ValueError):
    """Invalid or unknown configuration value."""


class CalibrationError(DajcError):
    """Characterization could not produce a usable gain matrix."""
