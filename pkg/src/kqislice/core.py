"""Shared domain types, the R² metric and deterministic splitting helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

SHARE_TOLERANCE = 1e-9

# LTE channel bandwidth (MHz) -> number of physical resource blocks.
PRB_TABLE: dict[float, int] = {
    1.4: 6,
    3.0: 15,
    5.0: 25,
    10.0: 50,
    15.0: 75,
    20.0: 100,
}

RSRP_RANGE = (-140.0, -44.0)
RSRQ_RANGE = (-24.0, -3.0)
RSSI_RANGE = (-120.0, -20.0)

# Order of the regression inputs. Station and config ids are labels, not features.
FEATURE_NAMES = ("rsrp", "rsrq", "rssi", "sinr", "mac_throughput", "bandwidth")


class ZeroVarianceError(ValueError):
    """Raised when R² is requested for a constant series of actual values."""


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


def _check_range(name: str, value: float, bounds: tuple[float, float]) -> None:
    _check_finite(name, value)
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value!r} outside [{lo}, {hi}]")


class KqiId(Enum):
    InitialTime = "InitialTime"
    AvgThroughput = "AvgThroughput"
    ShareQ360 = "ShareQ360"
    ShareQ720 = "ShareQ720"
    ShareQ1080 = "ShareQ1080"
    ShareQ1440 = "ShareQ1440"

    @property
    def field(self) -> str:
        return _KQI_FIELDS[self]

    @property
    def bounds(self) -> tuple[float, float]:
        """Physical range of the indicator."""
        if self.field.startswith("share_"):
            return (0.0, 1.0)
        return (0.0, math.inf)

    def clamp(self, value: float) -> float:
        lo, hi = self.bounds
        return min(max(value, lo), hi)

    @classmethod
    def parse(cls, name: str) -> "KqiId":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown KQI {name!r}; expected one of {[k.value for k in cls]}"
            ) from None


_KQI_FIELDS = {
    KqiId.InitialTime: "initial_time",
    KqiId.AvgThroughput: "avg_throughput",
    KqiId.ShareQ360: "share_q360",
    KqiId.ShareQ720: "share_q720",
    KqiId.ShareQ1080: "share_q1080",
    KqiId.ShareQ1440: "share_q1440",
}


class Comparator(Enum):
    GE = ">="
    LE = "<="

    def holds(self, value: float, bound: float) -> bool:
        return value >= bound if self is Comparator.GE else value <= bound

    @classmethod
    def parse(cls, text: str) -> "Comparator":
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"comparator must be '>=' or '<=', got {text!r}") from None


def check_bound(kqi: KqiId, bound: float) -> None:
    lo, hi = kqi.bounds
    if not (math.isfinite(bound) and lo <= bound <= hi):
        raise ValueError(f"bound {bound!r} for {kqi.value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class KqiVector:
    """Application-layer quality of one playback.

    Quality shares are fractions of the played segments, not percentages.
    """

    initial_time: float
    avg_throughput: float
    share_q360: float
    share_q720: float
    share_q1080: float
    share_q1440: float
    stall_count: int = 0
    stall_time: float = 0.0

    def __post_init__(self) -> None:
        for name in ("initial_time", "avg_throughput", "stall_time"):
            value = getattr(self, name)
            _check_finite(name, value)
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value!r}")
        for name in ("share_q360", "share_q720", "share_q1080", "share_q1440"):
            _check_range(name, getattr(self, name), (0.0, 1.0))
        if self.stall_count < 0:
            raise ValueError(f"stall_count must be nonnegative, got {self.stall_count}")
        total = self.share_q360 + self.share_q720 + self.share_q1080 + self.share_q1440
        if abs(total - 1.0) > SHARE_TOLERANCE:
            raise ValueError(f"quality shares sum to {total!r}, expected 1")

    def value(self, kqi: KqiId) -> float:
        return getattr(self, kqi.field)


@dataclass(frozen=True)
class RadioConditions:
    rsrp: float
    rsrq: float
    rssi: float

    def __post_init__(self) -> None:
        _check_range("rsrp", self.rsrp, RSRP_RANGE)
        _check_range("rsrq", self.rsrq, RSRQ_RANGE)
        _check_range("rssi", self.rssi, RSSI_RANGE)


@dataclass(frozen=True)
class SliceConfig:
    config_id: int
    bandwidth: float

    def __post_init__(self) -> None:
        if float(self.bandwidth) not in PRB_TABLE:
            raise ValueError(
                f"bandwidth {self.bandwidth!r} MHz not in {sorted(PRB_TABLE)}"
            )

    @property
    def prb_count(self) -> int:
        return PRB_TABLE[float(self.bandwidth)]


@dataclass(frozen=True)
class KpiVector:
    mac_throughput: float
    sinr: float

    def __post_init__(self) -> None:
        _check_finite("mac_throughput", self.mac_throughput)
        _check_finite("sinr", self.sinr)
        if self.mac_throughput < 0:
            raise ValueError(f"mac_throughput must be nonnegative, got {self.mac_throughput!r}")


@dataclass(frozen=True)
class TrainingRow:
    station_id: int
    config: SliceConfig
    radio: RadioConditions
    kpi: KpiVector
    kqi: KqiVector
    timestamp: float

    def __post_init__(self) -> None:
        _check_finite("timestamp", self.timestamp)
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be nonnegative, got {self.timestamp!r}")

    def features(self) -> np.ndarray:
        return feature_vector(self.radio, self.kpi, self.config)


Dataset = list[TrainingRow]


def feature_vector(radio: RadioConditions, kpi: KpiVector, config: SliceConfig) -> np.ndarray:
    """Flatten inputs in FEATURE_NAMES order."""
    return np.array(
        [radio.rsrp, radio.rsrq, radio.rssi, kpi.sinr, kpi.mac_throughput, float(config.bandwidth)]
    )


def unpack_features(x: Sequence[float]) -> tuple[RadioConditions, KpiVector, float]:
    """Inverse of feature_vector; the bandwidth comes back as a bare number."""
    if len(x) != len(FEATURE_NAMES):
        raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(x)}")
    rsrp, rsrq, rssi, sinr, mac, bandwidth = (float(v) for v in x)
    return RadioConditions(rsrp, rsrq, rssi), KpiVector(mac, sinr), bandwidth


def feature_matrix(rows: Sequence[TrainingRow]) -> np.ndarray:
    if not rows:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack([row.features() for row in rows])


def target_vector(rows: Sequence[TrainingRow], kqi: KqiId) -> np.ndarray:
    return np.array([row.kqi.value(kqi) for row in rows], dtype=float)


def r_squared(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {p.shape}")
    if a.size == 0:
        raise ValueError("r_squared needs at least one value")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVarianceError("actual values have zero variance")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle 0..n-1 with ``seed`` and cut into k folds whose sizes differ by at most one."""
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(order, k)]


def train_test_split(rows: Sequence[TrainingRow], train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not rows:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction!r}")
    n = len(rows)
    # Round half up; Python's round() would send 2.5 to 2.
    n_train = int(math.floor(n * train_fraction + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    return [rows[i] for i in train_idx], [rows[i] for i in test_idx]
