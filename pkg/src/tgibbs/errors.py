"""Exception types shared across the package."""


class TgsError(Exception):
    """Base class for all package errors."""


class EvaluationError(TgsError):
    """A density, logit or weight could not be evaluated at the requested state."""


class AbsoluteContinuityError(TgsError):
    """A modified conditional assigns zero mass where the target conditional does not."""


class DegenerateSelectionError(TgsError):
    """All coordinate-selection probabilities vanished or were invalid."""


class ConfigurationError(TgsError):
    """Invalid combination of kernel, target, or run options."""


class EnumerationLimitError(TgsError):
    """The state space is too large to enumerate exactly."""


class IngestionError(TgsError):
    """A dataset file could not be parsed."""


class NumericalRankError(TgsError):
    """An active-set cross-product block was numerically singular."""


class CapabilityError(TgsError):
    """The trace or target does not carry the information the estimator needs."""
