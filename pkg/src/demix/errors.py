"""Exception types shared across the package."""


class DemixError(Exception):
    """Base class for errors raised by this package."""


class MatrixParseError(DemixError):
    """A matrix text file is malformed. The message names the offending line."""


class DegenerateSupportError(DemixError):
    """A support set induces a singular Gram system (some sparse direction
    maps to zero under the dictionary)."""


class NumericalError(DemixError):
    """An iterative computation produced non-finite values."""
