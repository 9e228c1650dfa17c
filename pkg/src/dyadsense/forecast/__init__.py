"""Gradient-boosted forecasting of the four collaboration indicators."""

from .features import (
    N_FEATURES,
    SIGNALS,
    FeatureVector,
    IndicatorHistory,
    LagFeatures,
    extract_features,
    feature_names,
    persistence_predictions,
    training_rows,
)
from .gbt import GbtEnsemble, GradientBoostedRegressor, RegressionTree, TrainingSet, fit_ensemble, fit_tree
from .modelio import ModelFormatError, load_model, model_filename, save_model
from .states import forecast_states, forecast_values, state_from_values
from .train import TargetScore, build_training_set, evaluate_models, history_from_records, train_models

__all__ = [
    "N_FEATURES", "SIGNALS", "FeatureVector", "IndicatorHistory", "LagFeatures", "extract_features",
    "feature_names", "persistence_predictions", "training_rows",
    "GbtEnsemble", "GradientBoostedRegressor", "RegressionTree", "TrainingSet", "fit_ensemble", "fit_tree",
    "ModelFormatError", "load_model", "model_filename", "save_model",
    "forecast_states", "forecast_values", "state_from_values",
    "TargetScore", "build_training_set", "evaluate_models", "history_from_records", "train_models",
]
