"""Exception taxonomy shared across the package."""


class ApsgdError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ApsgdError, ValueError):
    """Shapes of inputs do not line up."""


class DomainError(ApsgdError, ValueError):
    """Scalar or matrix argument outside its mathematical domain."""


class NumericalError(ApsgdError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""


class RankDeficiencyError(ApsgdError):
    """A requested rank exceeds the numerical rank of the matrix."""


class InfeasibleConstraintError(ApsgdError):
    """The linear system defining the feasible set has no solution."""


class IdentificationError(ApsgdError):
    """Too few observations, or a degenerate model, to identify the target."""


class DegenerateTestError(ApsgdError):
    """The specification test has zero degrees of freedom."""


class DataError(ApsgdError, ValueError):
    """Malformed input data: CSV rows, labels, or constraint files."""


class ConfigError(ApsgdError, ValueError):
    """Invalid experiment configuration."""
