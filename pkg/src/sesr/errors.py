"""Shared exception types for the sesr package."""


class FormatError(ValueError):
    """Unreadable or unsupported file content (image decode, checkpoint header)."""


class ValidationError(ValueError):
    """A dataset directory or manifest violates the paired-sample contract."""


class ConfigurationError(ValueError):
    """Invalid or unknown configuration keys, or an unavailable component."""


class NumericError(RuntimeError):
    """A non-finite loss or gradient was produced during optimization."""


class EmptyRoiError(ValueError):
    """No saliency pixel exceeds the threshold; no region can be selected."""
