"""Exception types shared across the package."""


class DipoleLabError(Exception):
    """Base class for all package errors."""


class ConfigError(DipoleLabError):
    """Invalid configuration, parameters, or incompatible inputs (CLI exit 1)."""


class NumericalError(DipoleLabError):
    """A numerical guarantee was violated at runtime (CLI exit 2)."""
