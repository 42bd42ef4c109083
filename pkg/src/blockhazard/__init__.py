"""Low-rank tensor block hazard model for causal churn analysis."""

from .data import ObservedPanel, cum_active, decode_treatment, encode_treatment
from .estimator import FitConfig, FitResult, fit, select_ranks_bic
from .hazard import BlockTucker, weighted_loglik
from .links import LinkFunction
from .metrics import classification_error, misclassification_loss, normalized_mse
from .policy import cumulative_regret, decision_accuracy, policy_table
from .simulate import SimConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "ObservedPanel",
    "encode_treatment",
    "decode_treatment",
    "cum_active",
    "FitConfig",
    "FitResult",
    "fit",
    "select_ranks_bic",
    "BlockTucker",
    "weighted_loglik",
    "LinkFunction",
    "classification_error",
    "misclassification_loss",
    "normalized_mse",
    "policy_table",
    "cumulative_regret",
    "decision_accuracy",
    "SimConfig",
    "generate_synthetic",
    "__version__",
]
