"""Gaussian-process regression trained by minimizing PAC-Bayes risk certificates.

Full and sparse (inducing-point) GP regression whose hyperparameters are
learned by direct gradient descent on a PAC-Bayes generalization bound, plus
classically trained baselines (marginal likelihood, FITC/VFE/DTC) and rigorous
risk certificates for all of them.
"""

from .binary_kl import binary_kl, klinv, klinv_partials
from .kernels import HyperParams, MeanFunction, gram, gram_grad
from .losses import (
    LossSpec,
    PredictiveMoments,
    gibbs_pointwise,
    gibbs_risk,
    gibbs_risk_grad,
    minibatch_risk,
    pointwise_loss,
)
from .full_gp import FullGPState, full_objective_grad, full_predict, kl_full, nll_full
from .sparse_gp import (
    FreeFormMode,
    ParametrizedMode,
    SparseGPState,
    inducing_posterior_params,
    kl_sparse,
    sparse_nll,
    sparse_objective_grad,
    sparse_predict,
)
from .bound import (
    BoundConfig,
    BoundReport,
    PenaltyTerms,
    bayes_bound,
    build_report,
    discretize_hyperparams,
    pac_bound,
    penalty,
    pinsker_bound,
)
from .training import TrainConfig, gradient_check, multi_restart_study, train
from .data import Dataset, demo_1d, load_csv, sample_synthetic_gp, split_and_standardize

__version__ = "0.1.0"

__all__ = [
    "BoundConfig",
    "BoundReport",
    "Dataset",
    "FreeFormMode",
    "FullGPState",
    "HyperParams",
    "LossSpec",
    "MeanFunction",
    "ParametrizedMode",
    "PenaltyTerms",
    "PredictiveMoments",
    "SparseGPState",
    "TrainConfig",
    "bayes_bound",
    "binary_kl",
    "build_report",
    "demo_1d",
    "discretize_hyperparams",
    "full_objective_grad",
    "full_predict",
    "gibbs_pointwise",
    "gibbs_risk",
    "gibbs_risk_grad",
    "gradient_check",
    "gram",
    "gram_grad",
    "inducing_posterior_params",
    "kl_full",
    "kl_sparse",
    "klinv",
    "klinv_partials",
    "load_csv",
    "minibatch_risk",
    "multi_restart_study",
    "nll_full",
    "pac_bound",
    "penalty",
    "pinsker_bound",
    "pointwise_loss",
    "sample_synthetic_gp",
    "sparse_nll",
    "sparse_objective_grad",
    "sparse_predict",
    "split_and_standardize",
    "train",
]
