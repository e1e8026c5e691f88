"""Household online-shopping demand modeling.

Huber-loss gradient boosting over least-squares trees, linear and quadratic
baselines, overfit-gated hyperparameter search, Shapley-driven feature
elimination, and ALE effect curves.
"""

from .data import Dataset, FeatureKind, FeatureSpec, Schema, SynthConfig, retained_schema, synth
from .gbm import GbmModel, GbmParams, HuberConfig, fit, predict

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FeatureKind",
    "FeatureSpec",
    "GbmModel",
    "GbmParams",
    "HuberConfig",
    "Schema",
    "SynthConfig",
    "fit",
    "predict",
    "retained_schema",
    "synth",
]
