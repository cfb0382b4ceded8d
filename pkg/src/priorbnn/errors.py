"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataFormatError -> 2, NumericalError -> 3.
"""


class PriorBnnError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PriorBnnError):
    """An argument violates a documented precondition."""


class ConfigError(PriorBnnError):
    """A configuration value or combination is unusable."""


class DataFormatError(PriorBnnError):
    """An input file does not parse as its declared format."""


class NumericalError(PriorBnnError):
    """A computation produced a non-finite value where one is a bug."""


class TrainingError(PriorBnnError):
    """Gradient-descent training diverged or could not proceed."""
