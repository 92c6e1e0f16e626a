"""Reference training protocol: 70/30 holdout, k-fold selection on the 70%, scoring on the 30%."""

from __future__ import annotations

import dataclasses
import logging
import math

from .config import RunConfig
from .core import Dataset, KqiId, ZeroVarianceError, feature_matrix, r_squared, target_vector, train_test_split
from .dysa import alpha_from_training
from .modsys import FitError, ModelRegistry, fit, select_best

log = logging.getLogger(__name__)

NETSIM_KEY = "netsim"


@dataclasses.dataclass(frozen=True)
class TrainingRun:
    registry: ModelRegistry
    train: Dataset
    test: Dataset


def holdout_scores(registry: ModelRegistry, test: Dataset) -> dict[KqiId, float]:
    x = feature_matrix(test)
    scores = {}
    for kqi, sel in registry.selected.items():
        try:
            scores[kqi] = r_squared(target_vector(test, kqi), sel.model.predict_many(x))
        except ZeroVarianceError:
            scores[kqi] = math.nan
    return scores


def train_registry(rows: Dataset, cfg: RunConfig) -> TrainingRun:
    """Select models on the training split and attach holdout R², margins and latency benchmarks."""
    train, test = train_test_split(rows, cfg.cv.train_fraction, cfg.cv.seed)
    if len(train) < cfg.cv.k:
        raise ValueError(f"{len(train)} training rows are too few for {cfg.cv.k}-fold cross-validation")
    registry = select_best(train, cfg.kinds, cfg.cv.k, cfg.cv.seed, cfg.hyperparams)

    margins = {}
    if test:
        margins = {
            kqi: alpha_from_training(sel.model, test, cfg.dysa.margin_percentile)
            for kqi, sel in registry.selected.items()
        }

    # Every technique fitted on average throughput, for the latency comparison.
    x_train = feature_matrix(train)
    y_tput = target_vector(train, KqiId.AvgThroughput)
    benchmark = {}
    for kind in cfg.kinds:
        try:
            benchmark[kind] = fit(kind, x_train, y_tput, cfg.hyperparams, KqiId.AvgThroughput)
        except FitError as exc:
            log.warning("benchmark model %s not trained: %s", kind.value, exc)

    registry = dataclasses.replace(
        registry,
        holdout_r2=holdout_scores(registry, test) if test else {},
        margins=margins,
        benchmark=benchmark,
        metadata={
            NETSIM_KEY: dataclasses.asdict(cfg.netsim),
            "train_rows": len(train),
            "test_rows": len(test),
            "cv_k": cfg.cv.k,
            "cv_seed": cfg.cv.seed,
            "train_fraction": cfg.cv.train_fraction,
            "margin_percentile": cfg.dysa.margin_percentile,
        },
    )
    return TrainingRun(registry, train, test)
