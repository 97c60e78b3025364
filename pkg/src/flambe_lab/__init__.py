"""Representation learning and exploration in low-rank MDPs with continuous actions."""

from .errors import (
    ConfigurationError, ConstructionError, DataModelMismatchError, DomainError, FlambeLabError,
    InvariantViolation, IterationBoundError, ModelIntegrityError,
)
from .factory import EnvConfig, make_hypothesis_class, make_smooth_lowrank_mdp, smoothness_certificate
from .flambe import HyperParams, PlannerConfig, model_eval_gap, run_flambe, theoretical_hyperparams
from .mdp import LowRankMDP, ModelEstimate, value_exact, value_mc
from .oracles import TransitionDataset, mle_fit, samp
from .planner import elliptical_plan, iteration_bound
from .smoothness import SmoothnessProfile, holder_norm_estimate, uniform_bound_check

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConstructionError", "DataModelMismatchError", "DomainError", "FlambeLabError",
    "InvariantViolation", "IterationBoundError", "ModelIntegrityError",
    "EnvConfig", "make_hypothesis_class", "make_smooth_lowrank_mdp", "smoothness_certificate",
    "HyperParams", "PlannerConfig", "model_eval_gap", "run_flambe", "theoretical_hyperparams",
    "LowRankMDP", "ModelEstimate", "value_exact", "value_mc",
    "TransitionDataset", "mle_fit", "samp",
    "elliptical_plan", "iteration_bound",
    "SmoothnessProfile", "holder_norm_estimate", "uniform_bound_check",
    "__version__",
]
