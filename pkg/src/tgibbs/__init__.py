"""Importance-tempered componentwise samplers, variable selection, exact diagnostics."""

from . import analysis, bvs, discrete, gaussian
from .errors import (AbsoluteContinuityError, CapabilityError, ConfigurationError,
                     DegenerateSelectionError, EnumerationLimitError, EvaluationError,
                     IngestionError, NumericalRankError, TgsError)
from .sampler import (TargetModel, WeightedSample, WeightedTrace, frequency_pips,
                      gs_step, importance_estimate, rao_blackwell_pips, run_chain,
                      selection_probabilities, tgs_step, weight_variance, wtgs_step)

__version__ = "0.1.0"

__all__ = [
    "analysis", "bvs", "discrete", "gaussian",
    "TargetModel", "WeightedSample", "WeightedTrace",
    "run_chain", "tgs_step", "wtgs_step", "gs_step",
    "selection_probabilities", "importance_estimate", "weight_variance",
    "rao_blackwell_pips", "frequency_pips",
    "TgsError", "EvaluationError", "AbsoluteContinuityError",
    "DegenerateSelectionError", "ConfigurationError", "EnumerationLimitError",
    "IngestionError", "NumericalRankError", "CapabilityError",
]
