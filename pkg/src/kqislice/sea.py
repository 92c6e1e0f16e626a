"""Service experience acquisition: campaign planning, execution and the training database."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset, KpiVector, KqiVector, RadioConditions, SliceConfig, TrainingRow
from .netsim import Netsim

CSV_HEADER = (
    "station_id",
    "config_id",
    "bandwidth_mhz",
    "rsrp_dbm",
    "rsrq_db",
    "rssi_dbm",
    "sinr_db",
    "mac_tput_mbps",
    "init_time_s",
    "avg_tput_mbps",
    "share_q360",
    "share_q720",
    "share_q1080",
    "share_q1440",
    "stall_count",
    "stall_time_s",
    "timestamp_s",
)


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignPlan:
    """Measurement campaign over ``stations`` cells and the listed slice configurations.

    ``playbacks_per_config`` may be zero, which plans reconfigurations only.
    """

    stations: int
    configs: tuple[SliceConfig, ...]
    playbacks_per_config: int
    video_length: float
    relaunch_gap: float
    reconfig_time: float
    ue_distances: tuple[float, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stations < 1:
            raise ValueError("stations must be >= 1")
        if not self.configs:
            raise ValueError("at least one slice configuration is required")
        if self.playbacks_per_config < 0:
            raise ValueError("playbacks_per_config must be >= 0")
        for name in ("video_length", "relaunch_gap", "reconfig_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if len(self.ue_distances) != self.stations:
            raise ValueError(
                f"need one UE distance per station: {len(self.ue_distances)} != {self.stations}"
            )
        if any(d <= 0 for d in self.ue_distances):
            raise ValueError("UE distances must be positive")

    @property
    def gamma(self) -> int:
        return len(self.configs)


def campaign_duration(plan: CampaignPlan) -> float:
    """T = beta * gamma * (n * (iota + delta_iota) + tau)."""
    per_config = plan.playbacks_per_config * (plan.video_length + plan.relaunch_gap) + plan.reconfig_time
    return plan.stations * plan.gamma * per_config


def playback_seed(seed: int, station: int, config_index: int, repetition: int) -> int:
    return int(np.random.SeedSequence([seed, station, config_index, repetition]).generate_state(1)[0])


def execute_campaign(plan: CampaignPlan, oracle: Netsim | None = None) -> Dataset:
    """Run every playback of the plan in (station, config, repetition) order.

    Each (station, config) block starts with a reconfiguration of length tau,
    then plays n videos back to back separated by the relaunch gap. Row
    timestamps are playback start times.
    """
    oracle = oracle or Netsim()
    if len(oracle.cells) < plan.stations:
        raise ValueError(f"plan needs {plan.stations} cells, simulator has {len(oracle.cells)}")
    block = plan.playbacks_per_config * (plan.video_length + plan.relaunch_gap) + plan.reconfig_time
    rows: Dataset = []
    for s in range(plan.stations):
        cell = oracle.cells[s]
        for c, config in enumerate(plan.configs):
            start = (s * plan.gamma + c) * block + plan.reconfig_time
            for j in range(plan.playbacks_per_config):
                radio, kpi, kqi = oracle.playback(
                    cell.station_id,
                    plan.ue_distances[s],
                    config,
                    plan.video_length,
                    playback_seed(plan.seed, s, c, j),
                )
                t = start + j * (plan.video_length + plan.relaunch_gap)
                rows.append(TrainingRow(cell.station_id, config, radio, kpi, kqi, t))
    return rows


def _row_to_record(row: TrainingRow) -> list[str]:
    k = row.kqi
    values: list[object] = [
        row.station_id,
        row.config.config_id,
        float(row.config.bandwidth),
        row.radio.rsrp,
        row.radio.rsrq,
        row.radio.rssi,
        row.kpi.sinr,
        row.kpi.mac_throughput,
        k.initial_time,
        k.avg_throughput,
        k.share_q360,
        k.share_q720,
        k.share_q1080,
        k.share_q1440,
        k.stall_count,
        k.stall_time,
        row.timestamp,
    ]
    # repr() of a float is the shortest string that parses back to the same value.
    return [repr(float(v)) if isinstance(v, float) else str(v) for v in values]


def _record_to_row(rec: Sequence[str]) -> TrainingRow:
    if len(rec) != len(CSV_HEADER):
        raise ValueError(f"expected {len(CSV_HEADER)} columns, got {len(rec)}")
    f = dict(zip(CSV_HEADER, rec))
    return TrainingRow(
        station_id=int(f["station_id"]),
        config=SliceConfig(int(f["config_id"]), float(f["bandwidth_mhz"])),
        radio=RadioConditions(float(f["rsrp_dbm"]), float(f["rsrq_db"]), float(f["rssi_dbm"])),
        kpi=KpiVector(float(f["mac_tput_mbps"]), float(f["sinr_db"])),
        kqi=KqiVector(
            initial_time=float(f["init_time_s"]),
            avg_throughput=float(f["avg_tput_mbps"]),
            share_q360=float(f["share_q360"]),
            share_q720=float(f["share_q720"]),
            share_q1080=float(f["share_q1080"]),
            share_q1440=float(f["share_q1440"]),
            stall_count=int(f["stall_count"]),
            stall_time=float(f["stall_time_s"]),
        ),
        timestamp=float(f["timestamp_s"]),
    )


def write_rows(rows: Iterable[TrainingRow], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(_row_to_record(row))


def save_dataset(rows: Iterable[TrainingRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_rows(rows, fh)


def load_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DatasetFormatError(f"{path}: line 1: malformed header {header!r}")
        rows: Dataset = []
        for rec in reader:
            if not rec:
                continue
            try:
                rows.append(_record_to_row(rec))
            except (ValueError, KeyError) as exc:
                raise DatasetFormatError(f"{path}: line {reader.line_num}: {exc}") from exc
    return rows
