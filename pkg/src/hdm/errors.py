"""Exception types shared by the library and the command line."""


class HdmError(Exception):
    """Base class for all library errors."""


class InputError(HdmError, ValueError):
    """Malformed or out-of-range user input (bad arguments, bad files)."""


class ConfigurationError(HdmError):
    """A well-formed request that cannot be honoured.

    Typical causes are a mesh that is not Δ-adapted, a tensor that is not
    coercive, or a discretisation with no free degrees of freedom.
    """


class NumericalError(HdmError, ArithmeticError):
    """Factorisation breakdown, non-convergence or a failed residual check."""
