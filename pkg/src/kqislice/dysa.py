"""Dynamic slice allocation: margin-adjusted thresholds and the reconfiguration monitor."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Comparator, Dataset, KqiId, RadioConditions, SliceConfig, check_bound, feature_matrix, target_vector
from .modsys import ModelRegistry, TrainedModel
from .netsim import DEFAULT_PARAMS, NetsimParams, serving_features

TRACE_HEADER = ("time_s", "rsrp_dbm", "rsrq_db", "rssi_dbm")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class KqiTarget:
    kqi: KqiId
    comparator: Comparator
    bound: float

    def __post_init__(self) -> None:
        check_bound(self.kqi, self.bound)


@dataclass(frozen=True)
class SecurityMargin:
    """Per-KQI alpha, always applied toward the strict side of a target."""

    alphas: dict[KqiId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for kqi, alpha in self.alphas.items():
            if not (math.isfinite(alpha) and alpha >= 0):
                raise ValueError(f"margin for {kqi.value} must be finite and >= 0, got {alpha!r}")

    def alpha(self, kqi: KqiId) -> float:
        return self.alphas.get(kqi, 0.0)


def _residuals(model: TrainedModel, rows: Dataset) -> np.ndarray:
    if not rows:
        raise ValueError("need at least one validation row")
    if model.target is None:
        raise ValueError("model has no KQI target")
    return np.abs(target_vector(rows, model.target) - model.predict_many(feature_matrix(rows)))


def residual_quantile(residuals: Sequence[float], percentile: float) -> float:
    """Smallest residual r such that more than ``percentile`` of all residuals are <= r.

    This is the (floor(p*N)+1)-th order statistic: for nine 1s and one 9 at
    p=0.9 it returns 9, since only 90% (not more) of the residuals are <= 1.
    """
    if not 0.0 < percentile < 1.0:
        raise ValueError(f"percentile must be in (0, 1), got {percentile!r}")
    r = np.sort(np.asarray(residuals, dtype=float))
    if r.size == 0:
        raise ValueError("no residuals")
    return float(r[min(int(math.floor(percentile * r.size)), r.size - 1)])


def alpha_from_training(model: TrainedModel, validation_rows: Dataset, percentile: float = 0.9) -> float:
    if not 0.0 < percentile < 1.0:
        raise ValueError(f"percentile must be in (0, 1), got {percentile!r}")
    return residual_quantile(_residuals(model, validation_rows), percentile)


def max_residual(model: TrainedModel, validation_rows: Dataset) -> float:
    return float(np.max(_residuals(model, validation_rows)))


def threshold(estimate: float, target: KqiTarget, margin: SecurityMargin) -> float:
    """Margin-adjusted value: estimate - alpha for >= targets, estimate + alpha for <= targets."""
    alpha = margin.alpha(target.kqi)
    return estimate - alpha if target.comparator is Comparator.GE else estimate + alpha


def is_compliant(adjusted: float, target: KqiTarget) -> bool:
    return target.comparator.holds(adjusted, target.bound)


def adjusted_estimates(
    targets: Sequence[KqiTarget],
    radio: RadioConditions,
    config: SliceConfig,
    registry: ModelRegistry,
    margin: SecurityMargin,
    params: NetsimParams = DEFAULT_PARAMS,
) -> list[float]:
    x = serving_features(radio, config, params)
    return [threshold(registry.predict(t.kqi, x), t, margin) for t in targets]


def select_config(
    targets: Sequence[KqiTarget],
    radio: RadioConditions,
    registry: ModelRegistry,
    catalog: Sequence[SliceConfig],
    margin: SecurityMargin,
    params: NetsimParams = DEFAULT_PARAMS,
) -> SliceConfig | None:
    """Compliant configuration whose thresholds sit closest to the targets.

    Closeness is the summed absolute slack between each adjusted estimate and
    its bound. Ties go to the smaller bandwidth, then the lower config id.
    """
    if not catalog:
        raise ValueError("empty configuration catalog")
    missing = [t.kqi.value for t in targets if t.kqi not in registry.selected]
    if missing:
        raise KeyError(f"registry has no model for {missing}")
    best = None
    best_key = None
    for config in catalog:
        adjusted = adjusted_estimates(targets, radio, config, registry, margin, params)
        if not all(is_compliant(v, t) for v, t in zip(adjusted, targets)):
            continue
        slack = sum(abs(v - t.bound) for v, t in zip(adjusted, targets))
        key = (slack, float(config.bandwidth), config.config_id)
        if best_key is None or key < best_key:
            best, best_key = config, key
    return best


@dataclass(frozen=True)
class TimelineSample:
    time: float
    radio: RadioConditions
    config: SliceConfig
    adjusted: tuple[float, ...]
    compliant: bool
    alarm: bool  # no catalog configuration meets the targets
    reconfiguring: bool


@dataclass(frozen=True)
class ReconfigEvent:
    time: float
    from_config: SliceConfig
    to_config: SliceConfig
    duration: float


@dataclass(frozen=True)
class AllocationTimeline:
    samples: tuple[TimelineSample, ...]
    events: tuple[ReconfigEvent, ...]

    @property
    def reconfigurations(self) -> int:
        return len(self.events)


def run_monitor(
    radio_trace: Sequence[tuple[float, RadioConditions]],
    targets: Sequence[KqiTarget],
    registry: ModelRegistry,
    catalog: Sequence[SliceConfig],
    margin: SecurityMargin,
    reconfig_time: float = 0.0,
    hysteresis: int = 3,
    params: NetsimParams = DEFAULT_PARAMS,
) -> AllocationTimeline:
    """Replay a radio trace and track the slice configuration.

    The first sample sets the initial allocation. Afterwards a different
    choice is committed only once it has been made on ``hysteresis``
    consecutive samples; the slice is then non-compliant for
    ``reconfig_time`` seconds. When nothing in the catalog is compliant the
    monitor raises an alarm and falls back to the largest bandwidth.
    """
    if not radio_trace:
        raise ValueError("empty radio trace")
    if hysteresis < 1:
        raise ValueError("hysteresis must be >= 1")
    if reconfig_time < 0:
        raise ValueError("reconfig_time must be >= 0")
    times = [t for t, _ in radio_trace]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("trace times must be strictly increasing")
    fallback = max(catalog, key=lambda c: (float(c.bandwidth), -c.config_id))

    active: SliceConfig | None = None
    pending: SliceConfig | None = None
    streak = 0
    busy_until = -math.inf
    samples = []
    events = []
    for t, radio in radio_trace:
        choice = select_config(targets, radio, registry, catalog, margin, params)
        alarm = choice is None
        desired = fallback if alarm else choice
        if active is None:
            active = desired
        elif desired != active:
            if desired == pending:
                streak += 1
            else:
                pending, streak = desired, 1
            if streak >= hysteresis:
                events.append(ReconfigEvent(t, active, desired, reconfig_time))
                busy_until = t + reconfig_time
                active, pending, streak = desired, None, 0
        else:
            pending, streak = None, 0
        adjusted = adjusted_estimates(targets, radio, active, registry, margin, params)
        reconfiguring = t < busy_until
        ok = all(is_compliant(v, tg) for v, tg in zip(adjusted, targets)) and not reconfiguring
        samples.append(TimelineSample(t, radio, active, tuple(adjusted), ok, alarm, reconfiguring))
    return AllocationTimeline(tuple(samples), tuple(events))


# File formats ---------------------------------------------------------------


def load_trace(path: str | os.PathLike) -> list[tuple[float, RadioConditions]]:
    """Read a ``time_s,rsrp_dbm,rsrq_db,rssi_dbm`` CSV; errors carry the line number."""
    trace = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(f"{path}: line 1: expected header {','.join(TRACE_HEADER)}, got {header!r}")
        for rec in reader:
            if not rec:
                continue
            try:
                if len(rec) != len(TRACE_HEADER):
                    raise ValueError(f"expected {len(TRACE_HEADER)} columns, got {len(rec)}")
                t, rsrp, rsrq, rssi = (float(v) for v in rec)
                if not math.isfinite(t):
                    raise ValueError("time must be finite")
                if trace and t <= trace[-1][0]:
                    raise ValueError(f"time {t!r} is not after the previous sample")
                trace.append((t, RadioConditions(rsrp, rsrq, rssi)))
            except ValueError as exc:
                raise TraceFormatError(f"{path}: line {reader.line_num}: {exc}") from None
    if not trace:
        raise TraceFormatError(f"{path}: trace has no samples")
    return trace


def save_trace(trace: Sequence[tuple[float, RadioConditions]], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for t, r in trace:
            writer.writerow([repr(float(t)), repr(r.rsrp), repr(r.rsrq), repr(r.rssi)])


def timeline_header(targets: Sequence[KqiTarget]) -> list[str]:
    cols = ["time_s", "rsrp_dbm", "rsrq_db", "rssi_dbm", "config_id", "bandwidth_mhz"]
    cols += [f"adj_{i}_{t.kqi.value}" for i, t in enumerate(targets)]
    cols += ["compliant", "alarm", "reconfiguring", "reconfig_event"]
    return cols


def save_timeline(timeline: AllocationTimeline, targets: Sequence[KqiTarget], path: str | os.PathLike) -> None:
    event_times = {e.time for e in timeline.events}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(timeline_header(targets))
        for s in timeline.samples:
            writer.writerow(
                [repr(float(s.time)), repr(s.radio.rsrp), repr(s.radio.rsrq), repr(s.radio.rssi)]
                + [s.config.config_id, repr(float(s.config.bandwidth))]
                + [repr(float(v)) for v in s.adjusted]
                + [int(s.compliant), int(s.alarm), int(s.reconfiguring), int(s.time in event_times)]
            )
