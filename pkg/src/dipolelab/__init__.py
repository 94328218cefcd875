"""dipolelab: desk-scale checks of the long-wavelength (dipole) limit of
laser-driven Schrodinger dynamics, with a-posteriori error certificates."""

__version__ = "0.1.0"

from .errors import ConfigError, DipoleLabError, NumericalError

__all__ = ["ConfigError", "DipoleLabError", "NumericalError", "__version__"]
