"""Exception hierarchy shared across the toolkit."""


class VraKitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(VraKitError):
    """Malformed file: bad magic, header, or manifest syntax."""


class UnsupportedLayoutError(VraKitError):
    """Well-formed tensor file with a layout we refuse (Fortran order,
    big-endian, non-float dtype, >2 dimensions)."""


class DataValidityError(VraKitError):
    """Values violate an invariant: non-finite entries, dimension
    mismatches, missing dataset roles."""


class ParameterError(VraKitError):
    """Caller-supplied parameter out of its valid range."""
