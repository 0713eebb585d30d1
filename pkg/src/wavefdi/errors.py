"""Exception types shared across the package."""


class WaveFdiError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(WaveFdiError):
    """A scenario configuration could not be parsed or validated."""


class IntegrationDivergedError(WaveFdiError):
    """Time integration produced non-finite values (blow-up)."""


class ObservabilityError(WaveFdiError):
    """The sensor set does not make the discrete model observable."""


class NotSteadyStateError(WaveFdiError):
    """The filter gain has not converged to steady state."""


class DegenerateStatisticsError(WaveFdiError):
    """A test statistic could not be formed from degenerate matrices."""


class UnidentifiableSubsetError(WaveFdiError):
    """The selected parameter subset carries no Fisher information."""
