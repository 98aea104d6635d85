"""Exception hierarchy shared by all densewarp modules."""


class DensewarpError(Exception):
    """Base class for library errors."""


class StructuralError(DensewarpError, ValueError):
    """Array lengths or grids do not line up."""


class DegenerateInputError(DensewarpError, ValueError):
    """Input carries no usable information (all zero, constant, too few values)."""


class DomainError(DensewarpError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigurationError(DensewarpError, ValueError):
    """Invalid tuning or configuration parameters."""


class InputError(DensewarpError, ValueError):
    """Malformed input file."""
