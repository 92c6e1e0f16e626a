"""Synthetic radio link and DASH client standing in for a measured testbed.

Everything here is a pure function of its inputs and an integer seed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    RSRP_RANGE,
    feature_vector,
    RSRQ_RANGE,
    RSSI_RANGE,
    KpiVector,
    KqiVector,
    RadioConditions,
    SliceConfig,
)

RESOLUTIONS = ("360p", "720p", "1080p", "1440p")
BITRATE_LADDER: tuple[tuple[str, float], ...] = (
    ("360p", 1.0),
    ("720p", 2.5),
    ("1080p", 5.0),
    ("1440p", 8.0),
)


@dataclass(frozen=True)
class CellSite:
    station_id: int
    tx_power: float  # reference-signal power per resource element, dBm
    pathloss_exponent: float
    shadowing_sigma: float  # dB
    load: float = 0.5  # fraction of data resource elements carrying traffic

    def __post_init__(self) -> None:
        if not 2.0 <= self.pathloss_exponent <= 5.0:
            raise ValueError(f"pathloss_exponent {self.pathloss_exponent} outside [2, 5]")
        if self.shadowing_sigma < 0:
            raise ValueError("shadowing_sigma must be nonnegative")
        if not 0.0 <= self.load <= 1.0:
            raise ValueError("load must be in [0, 1]")


@dataclass(frozen=True)
class NetsimParams:
    """Channel and player constants. Every field can be overridden from the run config."""

    d0: float = 1.0
    pl0: float = 30.0
    noise_floor: float = -100.0  # dBm per resource element, interference included
    overhead_factor: float = 0.75
    efficiency_cap: float = 5.5  # bit/s/Hz before overhead
    carrier_prbs: int = 100  # RSSI is measured over the whole carrier
    noise_sigma: float = 0.2  # lognormal sigma of per-segment throughput
    safety: float = 0.8
    segment_duration: float = 2.0
    startup_buffer: float = 10.0
    buffer_cap: float = 12.0

    def __post_init__(self) -> None:
        if self.d0 <= 0 or self.segment_duration <= 0:
            raise ValueError("d0 and segment_duration must be positive")
        if not 0 < self.overhead_factor <= 1:
            raise ValueError("overhead_factor must be in (0, 1]")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must be in (0, 1]")
        if self.noise_sigma < 0 or self.efficiency_cap <= 0:
            raise ValueError("noise_sigma must be >= 0 and efficiency_cap > 0")
        if self.buffer_cap < self.segment_duration:
            raise ValueError("buffer_cap must hold at least one segment")


DEFAULT_PARAMS = NetsimParams()

# Indoor small cells; with DEFAULT_UE_DISTANCES the mean RSRP per station is
# roughly -90, -97, -103 and -108 dBm, which spans the whole bitrate ladder.
DEFAULT_CELLS = (
    CellSite(0, tx_power=15.0, pathloss_exponent=4.0, shadowing_sigma=3.0, load=0.3),
    CellSite(1, tx_power=15.0, pathloss_exponent=4.0, shadowing_sigma=3.0, load=0.5),
    CellSite(2, tx_power=15.0, pathloss_exponent=4.0, shadowing_sigma=3.0, load=0.6),
    CellSite(3, tx_power=15.0, pathloss_exponent=4.0, shadowing_sigma=3.0, load=0.8),
)
DEFAULT_UE_DISTANCES = (75.0, 112.0, 158.0, 211.0)


@dataclass(frozen=True)
class SegmentRecord:
    index: int
    resolution: str
    download_time: float
    buffer_level: float


@dataclass(frozen=True)
class PlaybackTrace:
    segments: tuple[SegmentRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for i, seg in enumerate(self.segments):
            if seg.index != i:
                raise ValueError("segment indices must be contiguous from 0")
            if seg.buffer_level < 0:
                raise ValueError("buffer level must be nonnegative")


def _clamp(value: float, bounds: tuple[float, float]) -> float:
    return min(max(value, bounds[0]), bounds[1])


def _db_to_mw(db: float) -> float:
    return 10.0 ** (db / 10.0)


def path_loss(distance: float, exponent: float, params: NetsimParams = DEFAULT_PARAMS) -> float:
    """Log-distance path loss in dB."""
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance!r}")
    return params.pl0 + 10.0 * exponent * math.log10(distance / params.d0)


def radio_from_rsrp(rsrp: float, load: float, params: NetsimParams = DEFAULT_PARAMS) -> RadioConditions:
    """Derive RSSI and RSRQ from RSRP given the cell load.

    RSSI sums reference/data power over the carrier's subcarriers plus noise;
    RSRQ = N_prb * RSRP / RSSI.
    """
    rsrp = _clamp(rsrp, RSRP_RANGE)
    n_prb = params.carrier_prbs
    per_re = _db_to_mw(rsrp) * (1.0 + load) + _db_to_mw(params.noise_floor)
    rssi = 10.0 * math.log10(12 * n_prb * per_re)
    rsrq = 10.0 * math.log10(n_prb) + rsrp - rssi
    return RadioConditions(rsrp, _clamp(rsrq, RSRQ_RANGE), _clamp(rssi, RSSI_RANGE))


def radio_conditions(
    cell: CellSite, distance: float, seed: int, params: NetsimParams = DEFAULT_PARAMS
) -> RadioConditions:
    loss = path_loss(distance, cell.pathloss_exponent, params)
    shadowing = 0.0
    if cell.shadowing_sigma > 0:
        shadowing = float(np.random.default_rng(seed).normal(0.0, cell.shadowing_sigma))
    return radio_from_rsrp(cell.tx_power - loss - shadowing, cell.load, params)


def sinr_db(radio: RadioConditions, params: NetsimParams = DEFAULT_PARAMS) -> float:
    return radio.rsrp - params.noise_floor


def spectral_efficiency(sinr: float, params: NetsimParams = DEFAULT_PARAMS) -> float:
    return min(math.log2(1.0 + _db_to_mw(sinr)), params.efficiency_cap)


def link_throughput(radio: RadioConditions, config: SliceConfig, params: NetsimParams = DEFAULT_PARAMS) -> float:
    """Mean MAC throughput in Mbit/s for the slice bandwidth under these radio conditions."""
    return config.bandwidth * spectral_efficiency(sinr_db(radio, params), params) * params.overhead_factor


def link_kpis(radio: RadioConditions, config: SliceConfig, params: NetsimParams = DEFAULT_PARAMS) -> KpiVector:
    """Noise-free KPIs, as the network would report them for the slice."""
    return KpiVector(mac_throughput=link_throughput(radio, config, params), sinr=sinr_db(radio, params))


def serving_features(
    radio: RadioConditions, config: SliceConfig, params: NetsimParams = DEFAULT_PARAMS
) -> np.ndarray:
    """Model inputs for a candidate configuration, KPIs taken from the noise-free link model."""
    return feature_vector(radio, link_kpis(radio, config, params), config)


def params_from_dict(d: dict) -> NetsimParams:
    known = set(NetsimParams.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown simulator parameter(s): {sorted(unknown)}")
    return NetsimParams(**d)


def select_rung(estimate: float, safety: float) -> int:
    """Index of the highest ladder rung not above safety * estimate (lowest if none fits)."""
    budget = safety * estimate
    chosen = 0
    for i, (_, bitrate) in enumerate(BITRATE_LADDER):
        if bitrate <= budget:
            chosen = i
    return chosen


def simulate_abr(
    link_mbps: float,
    video_length: float,
    seed: int,
    params: NetsimParams = DEFAULT_PARAMS,
) -> tuple[KqiVector, PlaybackTrace]:
    """Play one video over a link with mean throughput ``link_mbps``.

    The client probes the link once before the first request, then sizes each
    segment from the throughput measured on the previous download. Playback
    starts once ``startup_buffer`` seconds are buffered; the client idles when
    the buffer reaches ``buffer_cap``.
    """
    if video_length <= 0:
        raise ValueError(f"video_length must be positive, got {video_length!r}")
    if link_mbps <= 0:
        raise ValueError(f"link throughput must be positive, got {link_mbps!r}")

    seg = params.segment_duration
    n_full, rest = divmod(video_length, seg)
    durations = [seg] * int(n_full)
    if rest > 1e-12 or not durations:
        durations.append(rest if rest > 1e-12 else video_length)

    rng = np.random.default_rng(seed)
    sigma = params.noise_sigma
    # Mean-one lognormal factors: index 0 is the probe, then one per segment.
    factors = np.exp(sigma * rng.standard_normal(len(durations) + 1) - 0.5 * sigma * sigma)

    estimate = link_mbps * float(factors[0])
    buffer = 0.0
    playing = False
    stall_count = 0
    stall_time = 0.0
    counts = [0] * len(BITRATE_LADDER)
    goodputs = []
    records = []
    initial_time = 0.0

    for i, duration in enumerate(durations):
        rung = select_rung(estimate, params.safety)
        bits = BITRATE_LADDER[rung][1] * duration
        throughput = link_mbps * float(factors[i + 1])
        dt = bits / throughput
        if i == 0:
            initial_time = dt
        if playing:
            if buffer >= dt:
                buffer -= dt
            else:
                stall_count += 1
                stall_time += dt - buffer
                buffer = 0.0
        buffer += duration
        if not playing and (buffer >= params.startup_buffer or i == len(durations) - 1):
            playing = True
        idle = 0.0
        if buffer > params.buffer_cap:
            idle = buffer - params.buffer_cap
            buffer = params.buffer_cap
        goodputs.append(bits / (dt + idle))
        counts[rung] += 1
        records.append(SegmentRecord(i, BITRATE_LADDER[rung][0], dt, buffer))
        estimate = throughput

    n = len(durations)
    shares = [c / n for c in counts]
    kqi = KqiVector(
        initial_time=initial_time,
        avg_throughput=float(np.mean(goodputs)),
        share_q360=shares[0],
        share_q720=shares[1],
        share_q1080=shares[2],
        share_q1440=shares[3],
        stall_count=stall_count,
        stall_time=stall_time,
    )
    return kqi, PlaybackTrace(tuple(records))


def simulate_playback(
    radio: RadioConditions,
    config: SliceConfig,
    video_length: float,
    seed: int,
    params: NetsimParams = DEFAULT_PARAMS,
) -> tuple[KpiVector, KqiVector, PlaybackTrace]:
    kpi = link_kpis(radio, config, params)
    kqi, trace = simulate_abr(kpi.mac_throughput, video_length, seed, params)
    return kpi, kqi, trace


def oracle_kqis(
    radio: RadioConditions,
    config: SliceConfig,
    video_length: float,
    params: NetsimParams = DEFAULT_PARAMS,
) -> KqiVector:
    """Ground-truth KQIs with throughput noise switched off."""
    quiet = dataclasses.replace(params, noise_sigma=0.0)
    return simulate_playback(radio, config, video_length, 0, quiet)[1]


@dataclass(frozen=True)
class Netsim:
    """Bundle of cells and constants handed to campaign execution."""

    cells: tuple[CellSite, ...] = DEFAULT_CELLS
    params: NetsimParams = DEFAULT_PARAMS

    def cell(self, station_id: int) -> CellSite:
        for c in self.cells:
            if c.station_id == station_id:
                return c
        raise KeyError(f"no cell with station_id {station_id}")

    def playback(
        self, station_id: int, distance: float, config: SliceConfig, video_length: float, seed: int
    ) -> tuple[RadioConditions, KpiVector, KqiVector]:
        ss = np.random.SeedSequence(seed)
        radio_seed, play_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        radio = radio_conditions(self.cell(station_id), distance, radio_seed, self.params)
        kpi, kqi, _ = simulate_playback(radio, config, video_length, play_seed, self.params)
        return radio, kpi, kqi
