"""Exception and warning types shared across the package.

Every exception carries a short ``code`` used by the command-line front end
to print ``ERROR[<code>]: ...`` lines.
"""


class GBPSError(Exception):
    """Base class for all package errors (runtime failures)."""

    code = "runtime"


class ValidationError(GBPSError, ValueError):
    """Invalid input: bad shapes, out-of-range values, malformed files."""

    code = "validation"


class DimensionError(ValidationError):
    """Two objects that must have matching lengths do not."""

    code = "dimension"

    def __init__(self, what, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected length {expected}, got {got}")


class SimplexError(ValidationError):
    code = "simplex"


class InsufficientDataError(ValidationError):
    code = "data"


class SingularDesignError(ValidationError):
    code = "singular"


class DataFormatError(ValidationError):
    """A data file violates the CSV contract."""

    code = "data"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ConfigError(ValidationError):
    code = "config"


class DegenerateWeightsError(GBPSError):
    """All particle weights underflowed during reweighting."""

    code = "degenerate"


class DegenerateEvolutionWarning(RuntimeWarning):
    """Evolution covariance is identically zero, so the cloud cannot move."""


class DegenerateChainWarning(RuntimeWarning):
    """A Metropolis chain accepted almost no proposals."""
