"""Cross-validation, best-model selection and the model registry file."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..core import FEATURE_NAMES, Dataset, KqiId, ZeroVarianceError, feature_matrix, kfold_split, r_squared, target_vector
from .models import (
    ALL_KINDS,
    DEFAULT_HYPERPARAMS,
    Hyperparams,
    RegressorKind,
    TrainedModel,
    fit,
    model_from_dict,
    model_to_dict,
)
from .regressors import FitError

log = logging.getLogger(__name__)

REGISTRY_FORMAT = "kqislice-registry/1"


@dataclass(frozen=True)
class CVResult:
    fold_scores: tuple[float, ...]
    skipped_folds: tuple[int, ...]

    @property
    def mean(self) -> float:
        if not self.fold_scores:
            return math.nan
        return float(np.mean(self.fold_scores))


def cross_validate_arrays(
    kind: RegressorKind,
    x: np.ndarray,
    y: np.ndarray,
    k: int,
    seed: int,
    hyperparams: Hyperparams = DEFAULT_HYPERPARAMS,
    target: KqiId | None = None,
) -> CVResult:
    scores = []
    skipped = []
    folds = kfold_split(len(y), k, seed)
    for i, test_idx in enumerate(folds):
        mask = np.ones(len(y), dtype=bool)
        mask[test_idx] = False
        model = fit(kind, x[mask], y[mask], hyperparams, target)
        try:
            scores.append(r_squared(y[test_idx], model.predict_many(x[test_idx])))
        except ZeroVarianceError:
            skipped.append(i)
    return CVResult(tuple(scores), tuple(skipped))


def cross_validate(
    kind: RegressorKind,
    dataset: Dataset,
    target: KqiId,
    k: int,
    seed: int,
    hyperparams: Hyperparams = DEFAULT_HYPERPARAMS,
) -> CVResult:
    """k-fold R² of ``kind`` for one KQI. Folds whose held-out targets are constant are skipped."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(dataset) < k:
        raise ValueError(f"dataset of {len(dataset)} rows is too small for {k} folds")
    return cross_validate_arrays(
        kind, feature_matrix(dataset), target_vector(dataset, target), k, seed, hyperparams, target
    )


@dataclass(frozen=True)
class Selection:
    model: TrainedModel
    cv_score: float


@dataclass(frozen=True)
class ModelRegistry:
    """Best estimator per KQI plus the full kind x KQI table of mean CV R².

    ``scores`` holds NaN where a kind failed to train or every fold was skipped.
    ``feature_bounds`` is the per-feature (min, max) box of the training rows;
    ``predict`` clips inputs into it, so serving never extrapolates past the
    data (a GP, for one, drifts back to the training mean far from it).
    """

    version: int
    kinds: tuple[RegressorKind, ...]
    selected: dict[KqiId, Selection]
    scores: dict[RegressorKind, dict[KqiId, float]]
    holdout_r2: dict[KqiId, float] = field(default_factory=dict)
    margins: dict[KqiId, float] = field(default_factory=dict)
    benchmark: dict[RegressorKind, TrainedModel] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    feature_bounds: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def model(self, kqi: KqiId) -> TrainedModel:
        try:
            return self.selected[kqi].model
        except KeyError:
            raise KeyError(f"registry has no model for {kqi.value}") from None

    def covers(self, kqis: Iterable[KqiId]) -> bool:
        return all(k in self.selected for k in kqis)

    def clip(self, features: Sequence[float]) -> list[float]:
        if self.feature_bounds is None:
            return list(features)
        lo, hi = self.feature_bounds
        return [min(max(float(v), a), b) for v, a, b in zip(features, lo, hi)]

    def predict(self, kqi: KqiId, features: Sequence[float]) -> float:
        return self.model(kqi).predict(self.clip(features))


def pick_best(scores: dict[RegressorKind, float]) -> RegressorKind | None:
    """Highest score; ties go to the kind listed first in RegressorKind."""
    best = None
    for kind in ALL_KINDS:
        s = scores.get(kind, math.nan)
        if math.isnan(s):
            continue
        if best is None or s > scores[best]:
            best = kind
    return best


def select_best(
    dataset: Dataset,
    kinds: Sequence[RegressorKind] = ALL_KINDS,
    k: int = 10,
    seed: int = 0,
    hyperparams: Hyperparams = DEFAULT_HYPERPARAMS,
    targets: Sequence[KqiId] = tuple(KqiId),
    version: int = 1,
) -> ModelRegistry:
    """Cross-validate every kind on every target and refit the winners on all rows."""
    if not kinds:
        raise ValueError("need at least one regressor kind")
    kinds = tuple(kinds)
    x = feature_matrix(dataset)
    scores: dict[RegressorKind, dict[KqiId, float]] = {kind: {} for kind in kinds}
    selected: dict[KqiId, Selection] = {}
    for target in targets:
        y = target_vector(dataset, target)
        per_kind = {}
        for kind in kinds:
            try:
                per_kind[kind] = cross_validate_arrays(kind, x, y, k, seed, hyperparams, target).mean
            except FitError as exc:
                log.warning("%s failed on %s: %s", kind.value, target.value, exc)
                per_kind[kind] = math.nan
            scores[kind][target] = per_kind[kind]
        winner = pick_best(per_kind)
        if winner is None:
            raise FitError(f"no regressor produced a usable score for {target.value}")
        model = fit(winner, x, y, hyperparams, target)
        selected[target] = Selection(model, per_kind[winner])
        log.info("%s: selected %s (CV R2 %.4f)", target.value, winner.value, per_kind[winner])
    bounds = (tuple(x.min(axis=0).tolist()), tuple(x.max(axis=0).tolist())) if len(x) else None
    return ModelRegistry(version, kinds, selected, scores, feature_bounds=bounds)


def retrain(
    registry: ModelRegistry,
    dataset: Dataset,
    k: int = 10,
    seed: int = 0,
    hyperparams: Hyperparams = DEFAULT_HYPERPARAMS,
) -> ModelRegistry:
    """Rerun selection on new data; the result carries the next version number."""
    return select_best(
        dataset, registry.kinds, k, seed, hyperparams, tuple(registry.selected), registry.version + 1
    )


def _num(v: float) -> float | None:
    return None if v is None or math.isnan(v) else float(v)


def _unnum(v) -> float:
    return math.nan if v is None else float(v)


def registry_to_dict(registry: ModelRegistry) -> dict:
    return {
        "format": REGISTRY_FORMAT,
        "version": registry.version,
        "feature_names": list(FEATURE_NAMES),
        "kinds": [k.value for k in registry.kinds],
        "scores": {
            kind.value: {t.value: _num(s) for t, s in row.items()} for kind, row in registry.scores.items()
        },
        "selected": {
            t.value: {"cv_score": _num(sel.cv_score), "model": model_to_dict(sel.model)}
            for t, sel in registry.selected.items()
        },
        "holdout_r2": {t.value: _num(v) for t, v in registry.holdout_r2.items()},
        "margins": {t.value: float(v) for t, v in registry.margins.items()},
        "benchmark": {k.value: model_to_dict(m) for k, m in registry.benchmark.items()},
        "metadata": registry.metadata,
        "feature_bounds": None if registry.feature_bounds is None else [list(b) for b in registry.feature_bounds],
    }


def registry_from_dict(d: dict) -> ModelRegistry:
    if d.get("format") != REGISTRY_FORMAT:
        raise ValueError(f"not a model registry (format={d.get('format')!r})")
    if list(d.get("feature_names", [])) != list(FEATURE_NAMES):
        raise ValueError(f"registry feature order {d.get('feature_names')} != {list(FEATURE_NAMES)}")
    return ModelRegistry(
        version=int(d["version"]),
        kinds=tuple(RegressorKind.parse(k) for k in d["kinds"]),
        selected={
            KqiId.parse(t): Selection(model_from_dict(s["model"]), _unnum(s["cv_score"]))
            for t, s in d["selected"].items()
        },
        scores={
            RegressorKind.parse(kind): {KqiId.parse(t): _unnum(s) for t, s in row.items()}
            for kind, row in d["scores"].items()
        },
        holdout_r2={KqiId.parse(t): _unnum(v) for t, v in d.get("holdout_r2", {}).items()},
        margins={KqiId.parse(t): float(v) for t, v in d.get("margins", {}).items()},
        benchmark={RegressorKind.parse(k): model_from_dict(m) for k, m in d.get("benchmark", {}).items()},
        metadata=dict(d.get("metadata", {})),
        feature_bounds=_bounds(d.get("feature_bounds")),
    )


def _bounds(v) -> tuple[tuple[float, ...], tuple[float, ...]] | None:
    if v is None:
        return None
    lo, hi = (tuple(float(a) for a in b) for b in v)
    if len(lo) != len(FEATURE_NAMES) or len(hi) != len(FEATURE_NAMES):
        raise ValueError("feature_bounds must list one value per feature")
    return lo, hi


def save_registry(registry: ModelRegistry, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(registry_to_dict(registry), fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_registry(path: str | os.PathLike) -> ModelRegistry:
    with open(path, encoding="utf-8") as fh:
        return registry_from_dict(json.load(fh))


def write_score_table(registry: ModelRegistry, path: str | os.PathLike) -> None:
    """Rows are regressor kinds, columns KQIs, cells mean CV R²."""
    targets = [t for t in KqiId if any(t in row for row in registry.scores.values())]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["kind"] + [t.value for t in targets]) + "\n")
        for kind in registry.kinds:
            cells = [repr(registry.scores[kind].get(t, math.nan)) for t in targets]
            fh.write(",".join([kind.value] + cells) + "\n")
