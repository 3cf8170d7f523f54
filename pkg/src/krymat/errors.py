"""Exception types shared across the package."""


class KrymatError(Exception):
    """Base class for all krymat errors."""


class DimensionError(KrymatError, ValueError):
    """Operands have incompatible shapes or block widths."""


class NumericError(KrymatError, ArithmeticError):
    """A computation produced non-finite values (overflow, NaN)."""


class IllPosedError(KrymatError):
    """The algebraic Lyapunov/Sylvester operator is (near) singular."""


class StepFailureError(KrymatError):
    """An implicit time step could not be solved; try a smaller step size."""


class FactorizationError(KrymatError):
    """Sparse factorization failed (singular or structurally deficient matrix)."""


class CapExceededError(KrymatError):
    """A dense O(k^3) operation was requested above the configured cap."""


class ParseError(KrymatError, ValueError):
    """Malformed input file.  Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(KrymatError, ValueError):
    """Invalid run configuration."""
