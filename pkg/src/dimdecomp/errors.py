"""Exception hierarchy shared across the package."""


class DimdecompError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DimdecompError):
    """Invalid user-facing configuration (CLI config file, flags, run setup)."""


class DimensionMismatchError(DimdecompError):
    """Point or subset dimensionality does not match the input model."""


class BudgetExceededError(DimdecompError):
    """A black-box evaluation budget was exhausted."""


class NodeBudgetError(DimdecompError):
    """A quadrature backend would require more nodes than the configured cap."""


class NonFiniteEvaluationError(DimdecompError):
    """An integrand returned NaN/Inf; carries the offending point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class SingularFactorError(DimdecompError):
    """A multiplicative factor fell below the singularity floor.

    Carries the offending subset (`subset`, 0-based coordinate indices) and,
    when available, the evaluation point.
    """

    def __init__(self, message, subset=None, point=None):
        super().__init__(message)
        self.subset = subset
        self.point = point


class ZeroMeanError(DimdecompError):
    """The constant term vanishes and no conditioning shift was requested."""


class ZeroVarianceError(DimdecompError):
    """Total variance is zero where a normalized quantity was requested."""
