"""Beam search with global rewards, prefix classifiers and probes."""

from .beam import ArScorer, BeamConfig, BeamResult, BeamState, beam_search, enumerate_objective
from .classifier import (
    ClassifierConfig,
    PrefixClassifier,
    feature_matrix,
    mean_pool_features,
    prefix_features,
    train_classifier,
    train_prefix_classifier,
)
from .rewards import (
    BetaReward,
    ClassReward,
    ExternalReward,
    prefill_maturation,
    reward_beta,
    reward_class,
    sheet_fraction,
)

__all__ = [
    "ArScorer", "BeamConfig", "BeamResult", "BeamState", "BetaReward", "ClassReward", "ClassifierConfig",
    "ExternalReward", "PrefixClassifier", "beam_search", "enumerate_objective", "feature_matrix",
    "mean_pool_features", "prefill_maturation", "prefix_features", "reward_beta", "reward_class",
    "sheet_fraction", "train_classifier", "train_prefix_classifier",
]
