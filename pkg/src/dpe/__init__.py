"""Deep probabilistic ensembles: jointly trained ensembles whose
cross-member parameter distributions are pulled toward Gaussian priors by
a KL penalty, plus a pool-based active learning harness that acquires the
points with the highest entropy of the ensemble-averaged prediction."""

from .active_learning import (
    LabelPool,
    RoundReport,
    Schedule,
    Strategy,
    acquire,
    compare_strategies,
    get_strategy,
    prediction_entropy,
    run_schedule,
)
from .data import Dataset, gen_blobs, gen_moons, gen_spirals, load_csv, load_idx_images, split
from .ensemble import Ensemble, TrainConfig, joint_loss, predict_mean, train
from .errors import ConfigError, DPEError, NumericError, StaleCacheError
from .estimator import DeepProbabilisticEnsembleClassifier
from .regularizer import ParameterGroup, gaussian_kl, group_penalty, penalty_gradient, total_penalty

__all__ = [
    "ConfigError",
    "DPEError",
    "Dataset",
    "DeepProbabilisticEnsembleClassifier",
    "Ensemble",
    "LabelPool",
    "NumericError",
    "ParameterGroup",
    "RoundReport",
    "Schedule",
    "StaleCacheError",
    "Strategy",
    "TrainConfig",
    "acquire",
    "compare_strategies",
    "gaussian_kl",
    "gen_blobs",
    "gen_moons",
    "gen_spirals",
    "get_strategy",
    "group_penalty",
    "joint_loss",
    "load_csv",
    "load_idx_images",
    "penalty_gradient",
    "predict_mean",
    "prediction_entropy",
    "run_schedule",
    "split",
    "total_penalty",
    "train",
]

__version__ = "0.1.0"
