"""Hessian discretisation method for fourth-order problems with clamped boundary conditions."""

from .errors import ConfigurationError, HdmError, InputError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "HdmError", "InputError", "NumericalError", "__version__"]
