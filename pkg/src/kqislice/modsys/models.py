"""Per-KQI regression models: fitting, prediction and latency measurement."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Sequence

import numpy as np

from ..core import KqiId, ZeroVarianceError, r_squared
from .regressors import FitError, GaussianProcess, KernelMachine, LinearModel, StepwiseModel
from .tree import RegressionTree


class RegressorKind(Enum):
    """Regression techniques in their tie-break order."""

    LR = "LR"
    SWLR = "SWLR"
    DTR = "DTR"
    SVM_G = "SVM_G"
    SVM_C = "SVM_C"
    SVM_Q = "SVM_Q"
    GPR = "GPR"

    @classmethod
    def parse(cls, name: str) -> "RegressorKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown regressor {name!r}; expected one of {[k.value for k in cls]}"
            ) from None


ALL_KINDS = tuple(RegressorKind)


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int | None = 8
    min_leaf: int = 5
    svm_c: float = 10.0
    svm_width: float | None = None  # None: median pairwise distance of the training inputs
    gpr_length_scale: float = 1.0
    gpr_signal_variance: float = 1.0
    gpr_noise_variance: float = 1e-2

    def replace(self, **changes: Any) -> "Hyperparams":
        return Hyperparams(**{**asdict(self), **changes})

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**d)


DEFAULT_HYPERPARAMS = Hyperparams()

_PREDICTORS = {
    RegressorKind.LR: LinearModel,
    RegressorKind.SWLR: StepwiseModel,
    RegressorKind.DTR: RegressionTree,
    RegressorKind.SVM_G: KernelMachine,
    RegressorKind.SVM_C: KernelMachine,
    RegressorKind.SVM_Q: KernelMachine,
    RegressorKind.GPR: GaussianProcess,
}


@dataclass(frozen=True)
class TrainedModel:
    """A fitted estimator for one KQI.

    Features are standardized with ``mean``/``std`` before reaching the
    predictor. Constant training columns get std 1 and are listed in
    ``constant``. Trees are grown on raw feature values, since an affine
    rescaling of a column leaves the CART partition unchanged.
    """

    kind: RegressorKind
    target: KqiId | None
    predictor: Any
    mean: np.ndarray
    std: np.ndarray
    constant: tuple[bool, ...]
    train_r2: float | None
    hyperparams: Hyperparams = field(default=DEFAULT_HYPERPARAMS)

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def scale(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def _raw(self, x: np.ndarray) -> np.ndarray:
        if self.kind is RegressorKind.DTR:
            return self.predictor.predict(x)
        return self.predictor.predict(self.scale(x))

    def predict_many(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = self._raw(x)
        if self.target is not None:
            lo, hi = self.target.bounds
            out = np.clip(out, lo, hi)
        return out

    def predict(self, x: Sequence[float]) -> float:
        if len(x) != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {len(x)}")
        if self.kind is RegressorKind.DTR:
            value = self.predictor.predict_one(x)
        else:
            value = float(self._raw(np.asarray(x, dtype=float)[None, :])[0])
        return self.target.clamp(value) if self.target is not None else value


def feature_scaling(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple[bool, ...]]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = tuple(bool(s == 0.0) for s in std)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std, constant


def fit(
    kind: RegressorKind,
    features: np.ndarray,
    targets: np.ndarray,
    hyperparams: Hyperparams = DEFAULT_HYPERPARAMS,
    target: KqiId | None = None,
) -> TrainedModel:
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError(f"inconsistent shapes {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise FitError(f"need at least 2 rows, got {x.shape[0]}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise ValueError("features and targets must be finite")

    mean, std, constant = feature_scaling(x)
    z = (x - mean) / std
    hp = hyperparams
    if kind is RegressorKind.LR:
        predictor = LinearModel.fit(z, y)
    elif kind is RegressorKind.SWLR:
        predictor = StepwiseModel.fit(z, y)
    elif kind is RegressorKind.DTR:
        predictor = RegressionTree.fit(x, y, hp.max_depth, hp.min_leaf)
    elif kind is RegressorKind.SVM_G:
        predictor = KernelMachine.fit(z, y, "gaussian", hp.svm_c, width=hp.svm_width)
    elif kind is RegressorKind.SVM_C:
        predictor = KernelMachine.fit(z, y, "poly", hp.svm_c, degree=3)
    elif kind is RegressorKind.SVM_Q:
        predictor = KernelMachine.fit(z, y, "poly", hp.svm_c, degree=2)
    elif kind is RegressorKind.GPR:
        predictor = GaussianProcess.fit(
            z, y, hp.gpr_length_scale, hp.gpr_signal_variance, hp.gpr_noise_variance
        )
    else:  # pragma: no cover
        raise ValueError(f"unsupported kind {kind}")

    model = TrainedModel(kind, target, predictor, mean, std, constant, None, hp)
    try:
        train_r2 = r_squared(y, model.predict_many(x))
    except ZeroVarianceError:
        train_r2 = None
    return TrainedModel(kind, target, predictor, mean, std, constant, train_r2, hp)


def predict(model: TrainedModel, features: Sequence[float]) -> float:
    return model.predict(features)


@dataclass(frozen=True)
class LatencyStats:
    samples_us: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.samples_us)

    @property
    def min(self) -> float:
        return min(self.samples_us)

    @property
    def median(self) -> float:
        return float(np.median(self.samples_us))

    @property
    def p95(self) -> float:
        return float(np.percentile(self.samples_us, 95))


def estimation_latency(model: TrainedModel, inputs: Sequence[Sequence[float]], repetitions: int) -> LatencyStats:
    """Wall-clock time per single prediction, one sample per repetition.

    Each repetition predicts every input one at a time; the sample is the
    elapsed time divided by the number of inputs. Run it single-threaded.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not inputs:
        raise ValueError("need at least one input vector")
    vectors = [list(map(float, v)) for v in inputs]
    model.predict(vectors[0])  # warm-up
    samples = []
    clock = time.perf_counter_ns
    for _ in range(repetitions):
        start = clock()
        for v in vectors:
            model.predict(v)
        samples.append((clock() - start) / 1000.0 / len(vectors))
    return LatencyStats(tuple(samples))


def _nan_to_none(v: float | None) -> float | None:
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "kind": model.kind.value,
        "target": model.target.value if model.target is not None else None,
        "feature_mean": model.mean.tolist(),
        "feature_std": model.std.tolist(),
        "constant_features": list(model.constant),
        "train_r2": _nan_to_none(model.train_r2),
        "hyperparams": asdict(model.hyperparams),
        "parameters": model.predictor.to_dict(),
    }


def model_from_dict(d: dict) -> TrainedModel:
    kind = RegressorKind.parse(d["kind"])
    target = KqiId.parse(d["target"]) if d.get("target") is not None else None
    predictor = _PREDICTORS[kind].from_dict(d["parameters"])
    return TrainedModel(
        kind=kind,
        target=target,
        predictor=predictor,
        mean=np.asarray(d["feature_mean"], dtype=float),
        std=np.asarray(d["feature_std"], dtype=float),
        constant=tuple(bool(c) for c in d["constant_features"]),
        train_r2=d.get("train_r2"),
        hyperparams=Hyperparams.from_dict(d["hyperparams"]),
    )
