"""Exception hierarchy. Every error raised on purpose by the package derives from ``GCCEError``."""


class GCCEError(Exception):
    pass


class ValidationError(GCCEError, ValueError):
    """Input violates a documented precondition."""


class ConfigError(ValidationError):
    """Invalid configuration file or lattice description."""


class ParseError(ValidationError):
    """Malformed line in a text input file."""

    def __init__(self, message, path=None, lineno=None):
        loc = ''
        if path is not None:
            loc += f'{path}'
        if lineno is not None:
            loc += f':{lineno}'
        super().__init__(f'{loc}: {message}' if loc else message)
        self.path = path
        self.lineno = lineno


class SingularityError(ValidationError):
    """Coupling requested between coincident points."""


class UnsupportedOrderError(ValidationError):
    pass


class NumericalError(GCCEError, ArithmeticError):
    """Numerical failure during a simulation or fit."""


class DegeneracyError(NumericalError):
    """Requested qubit level is not uniquely defined."""


class FitRangeError(NumericalError):
    """Data does not decay enough within the simulated window to be fitted."""


class BranchResolutionError(NumericalError):
    """Fewer spectral branches resolved than requested."""
