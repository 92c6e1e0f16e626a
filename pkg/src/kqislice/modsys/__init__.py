"""Per-KQI regression modelling and best-estimator selection."""

from .models import (
    ALL_KINDS,
    DEFAULT_HYPERPARAMS,
    Hyperparams,
    LatencyStats,
    RegressorKind,
    TrainedModel,
    estimation_latency,
    fit,
    model_from_dict,
    model_to_dict,
    predict,
)
from .regressors import FitError
from .selection import (
    CVResult,
    ModelRegistry,
    Selection,
    cross_validate,
    load_registry,
    pick_best,
    registry_from_dict,
    registry_to_dict,
    retrain,
    save_registry,
    select_best,
    write_score_table,
)

__all__ = [
    "ALL_KINDS",
    "CVResult",
    "DEFAULT_HYPERPARAMS",
    "FitError",
    "Hyperparams",
    "LatencyStats",
    "ModelRegistry",
    "RegressorKind",
    "Selection",
    "TrainedModel",
    "cross_validate",
    "estimation_latency",
    "fit",
    "load_registry",
    "model_from_dict",
    "model_to_dict",
    "pick_best",
    "predict",
    "registry_from_dict",
    "registry_to_dict",
    "retrain",
    "save_registry",
    "select_best",
    "write_score_table",
]
