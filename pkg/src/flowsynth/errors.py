"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 1, I/O
problems exit 2.
"""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class EmptyInputError(ValidationError):
    """An operation received an input with no usable elements."""


class ConfigError(ValidationError):
    """A configuration value is out of its legal range."""


class FlowFileError(OSError):
    """A flow/tensor file is truncated, has a bad magic number, or is
    otherwise unreadable."""
