"""Exception types raised across the package."""


class SubgeoError(Exception):
    """Base class for all package errors."""


# model_core
class NoUnitRoot(SubgeoError, ValueError):
    pass


class UnstableRemainder(SubgeoError, ValueError):
    pass


class HistoryLengthMismatch(SubgeoError, ValueError):
    pass


class RescaleUndefined(SubgeoError, ValueError):
    pass


# companion_algebra / drift_verifier
class DimensionMismatch(SubgeoError, ValueError):
    pass


class NotContractive(SubgeoError, ValueError):
    pass


class DomainError(SubgeoError, ValueError):
    pass


class BudgetExceeded(SubgeoError, RuntimeError):
    """Monte Carlo budget exhausted; ``partial`` carries whatever was computed."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# rate_classifier
class NotCovered(SubgeoError):
    pass


class BorderlineAmbiguous(SubgeoError):
    pass


class EnvelopeMissing(SubgeoError):
    pass


# sim_engine
class InsufficientDecay(SubgeoError):
    pass


class DegenerateSeries(SubgeoError, ValueError):
    pass


class ConfigError(SubgeoError, ValueError):
    pass
