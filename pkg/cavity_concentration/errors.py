"""
Exception hierarchy shared by the library and the command-line front end.
Each family carries the process exit code the CLI reports for it.
"""


class ConcentrationError(Exception):
    """Base class for every error raised by cavity_concentration"""

    exit_code = 1


class ValidationError(ConcentrationError, ValueError):
    """Invalid input: configuration, ranges, amplitudes"""

    exit_code = 2


class LayoutError(ValidationError):
    """Inconsistent subsystem labels or dimensions"""


class UnsupportedConfigError(ValidationError):
    """Closed-form results requested outside the matched case a = c, b = d"""


class RegimeError(ConcentrationError, ValueError):
    """Physical parameters outside the modeled underdamped regime"""

    exit_code = 3


class NumericalError(ConcentrationError, ArithmeticError):
    """Internal numerical failure"""

    exit_code = 4


class ZeroNormError(NumericalError):
    """A state with zero norm cannot be normalized"""


class UndefinedFidelityError(ZeroNormError):
    """Fidelity of a zero-trace density matrix"""


class QuadratureError(NumericalError):
    """Click-time quadrature failed to converge or lost probability"""


class TruncationError(NumericalError):
    """Population leaked above the allowed Fock level"""
