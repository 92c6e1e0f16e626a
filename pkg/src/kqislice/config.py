"""Run configuration: a JSON file with a fixed schema; unknown keys are rejected.

Schema (every section and key optional, defaults give the reference setup)::

    {
      "netsim":   {<NetsimParams field>: number, ...},
      "cells":    [{"station_id", "tx_power", "pathloss_exponent", "shadowing_sigma", "load"}],
      "catalog":  [{"config_id": int, "bandwidth_mhz": number}],
      "campaign": {"stations", "playbacks_per_config", "video_length_s",
                   "relaunch_gap_s", "reconfig_time_s", "ue_distances_m", "seed"},
      "regressors": {"kinds": ["LR", ...], "hyperparams": {<Hyperparams field>: value}},
      "cv":       {"k", "seed", "train_fraction"},
      "pricing":  {"base_rate"},
      "negotiation": {"max_rounds"},
      "dysa":     {"margin_percentile", "hysteresis", "reconfig_time_s"},
      "latency_repetitions": int,
      "output_dir": str
    }

The campaign tests every catalog configuration, so gamma = len(catalog).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Any

from .core import SliceConfig
from .modsys import ALL_KINDS, DEFAULT_HYPERPARAMS, Hyperparams, RegressorKind
from .netsim import DEFAULT_CELLS, DEFAULT_PARAMS, DEFAULT_UE_DISTANCES, CellSite, Netsim, NetsimParams
from .sea import CampaignPlan


class ConfigError(ValueError):
    pass


DEFAULT_CATALOG = tuple(SliceConfig(i, bw) for i, bw in enumerate((5.0, 10.0, 15.0, 20.0)))


@dataclass(frozen=True)
class CampaignSettings:
    stations: int = 4
    playbacks_per_config: int = 50
    video_length_s: float = 60.0
    relaunch_gap_s: float = 10.0
    reconfig_time_s: float = 30.0
    ue_distances_m: tuple[float, ...] = DEFAULT_UE_DISTANCES
    seed: int = 42


@dataclass(frozen=True)
class CvSettings:
    k: int = 10
    seed: int = 42
    train_fraction: float = 0.7


@dataclass(frozen=True)
class DysaSettings:
    margin_percentile: float = 0.9
    hysteresis: int = 3
    reconfig_time_s: float = 30.0


@dataclass(frozen=True)
class RunConfig:
    netsim: NetsimParams = DEFAULT_PARAMS
    cells: tuple[CellSite, ...] = DEFAULT_CELLS
    catalog: tuple[SliceConfig, ...] = DEFAULT_CATALOG
    campaign: CampaignSettings = CampaignSettings()
    kinds: tuple[RegressorKind, ...] = ALL_KINDS
    hyperparams: Hyperparams = DEFAULT_HYPERPARAMS
    cv: CvSettings = CvSettings()
    base_rate: float = 1.0
    max_rounds: int = 10
    dysa: DysaSettings = DysaSettings()
    latency_repetitions: int = 1000
    output_dir: str = "out"

    def simulator(self) -> Netsim:
        return Netsim(self.cells, self.netsim)

    def plan(self) -> CampaignPlan:
        c = self.campaign
        return CampaignPlan(
            stations=c.stations,
            configs=self.catalog,
            playbacks_per_config=c.playbacks_per_config,
            video_length=c.video_length_s,
            relaunch_gap=c.relaunch_gap_s,
            reconfig_time=c.reconfig_time_s,
            ue_distances=tuple(c.ue_distances_m),
            seed=c.seed,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(
            self,
            campaign=dataclasses.replace(self.campaign, seed=seed),
            cv=dataclasses.replace(self.cv, seed=seed),
        )


def _check_keys(obj: Any, where: str, allowed: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key {where + '.' if where != '<root>' else ''}{unknown[0]}")
    return obj


def _coerce(value: Any, default: Any) -> Any:
    """Convert a JSON value to the type of the field's default."""
    if value is None or default is dataclasses.MISSING:
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"expected a number, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if value != int(value):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _build(cls, obj: Any, where: str, convert: dict[str, Any] | None = None):
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    obj = _check_keys(obj, where, set(defaults))
    kwargs = {}
    for key, value in obj.items():
        try:
            if convert and key in convert:
                kwargs[key] = convert[key](value)
            else:
                kwargs[key] = _coerce(value, defaults[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.{key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _catalog(items: Any) -> tuple[SliceConfig, ...]:
    if not isinstance(items, list) or not items:
        raise ConfigError("catalog: expected a nonempty list")
    out = []
    for i, item in enumerate(items):
        where = f"catalog[{i}]"
        _check_keys(item, where, {"config_id", "bandwidth_mhz"})
        try:
            out.append(SliceConfig(int(item["config_id"]), float(item["bandwidth_mhz"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    ids = [c.config_id for c in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("catalog: config_id values must be unique")
    return tuple(out)


def config_from_dict(d: dict) -> RunConfig:
    top = {
        "netsim", "cells", "catalog", "campaign", "regressors", "cv", "pricing",
        "negotiation", "dysa", "latency_repetitions", "output_dir",
    }
    _check_keys(d, "<root>", top)
    kw: dict[str, Any] = {}
    if "netsim" in d:
        kw["netsim"] = _build(NetsimParams, d["netsim"], "netsim")
    if "cells" in d:
        if not isinstance(d["cells"], list) or not d["cells"]:
            raise ConfigError("cells: expected a nonempty list")
        kw["cells"] = tuple(_build(CellSite, c, f"cells[{i}]") for i, c in enumerate(d["cells"]))
    if "catalog" in d:
        kw["catalog"] = _catalog(d["catalog"])
    if "campaign" in d:
        kw["campaign"] = _build(
            CampaignSettings, d["campaign"], "campaign", {"ue_distances_m": lambda v: tuple(float(x) for x in v)}
        )
    if "regressors" in d:
        reg = _check_keys(d["regressors"], "regressors", {"kinds", "hyperparams"})
        if "kinds" in reg:
            try:
                kinds = tuple(RegressorKind.parse(k) for k in reg["kinds"])
            except ValueError as exc:
                raise ConfigError(f"regressors.kinds: {exc}") from None
            if not kinds:
                raise ConfigError("regressors.kinds: must not be empty")
            kw["kinds"] = kinds
        if "hyperparams" in reg:
            kw["hyperparams"] = _build(Hyperparams, reg["hyperparams"], "regressors.hyperparams")
    if "cv" in d:
        kw["cv"] = _build(CvSettings, d["cv"], "cv")
    if "pricing" in d:
        kw["base_rate"] = float(_check_keys(d["pricing"], "pricing", {"base_rate"}).get("base_rate", 1.0))
    if "negotiation" in d:
        kw["max_rounds"] = int(_check_keys(d["negotiation"], "negotiation", {"max_rounds"}).get("max_rounds", 10))
    if "dysa" in d:
        kw["dysa"] = _build(DysaSettings, d["dysa"], "dysa")
    for key in ("latency_repetitions", "output_dir"):
        if key in d:
            kw[key] = d[key]
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    c = cfg.campaign
    if len(cfg.cells) < c.stations:
        raise ConfigError(f"campaign.stations: {c.stations} stations but only {len(cfg.cells)} cells")
    try:
        cfg.plan()
    except ValueError as exc:
        raise ConfigError(f"campaign: {exc}") from None
    if not 2 <= cfg.cv.k:
        raise ConfigError("cv.k: must be >= 2")
    if not 0 < cfg.cv.train_fraction < 1:
        raise ConfigError("cv.train_fraction: must be in (0, 1)")
    if cfg.base_rate <= 0:
        raise ConfigError("pricing.base_rate: must be positive")
    if cfg.max_rounds < 1:
        raise ConfigError("negotiation.max_rounds: must be >= 1")
    if not 0 < cfg.dysa.margin_percentile < 1:
        raise ConfigError("dysa.margin_percentile: must be in (0, 1)")
    if cfg.dysa.hysteresis < 1:
        raise ConfigError("dysa.hysteresis: must be >= 1")
    if cfg.dysa.reconfig_time_s < 0:
        raise ConfigError("dysa.reconfig_time_s: must be >= 0")
    if not isinstance(cfg.latency_repetitions, int) or cfg.latency_repetitions < 1:
        raise ConfigError("latency_repetitions: must be a positive integer")


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "netsim": dataclasses.asdict(cfg.netsim),
        "cells": [dataclasses.asdict(c) for c in cfg.cells],
        "catalog": [{"config_id": c.config_id, "bandwidth_mhz": float(c.bandwidth)} for c in cfg.catalog],
        "campaign": {**dataclasses.asdict(cfg.campaign), "ue_distances_m": list(cfg.campaign.ue_distances_m)},
        "regressors": {"kinds": [k.value for k in cfg.kinds], "hyperparams": dataclasses.asdict(cfg.hyperparams)},
        "cv": dataclasses.asdict(cfg.cv),
        "pricing": {"base_rate": cfg.base_rate},
        "negotiation": {"max_rounds": cfg.max_rounds},
        "dysa": dataclasses.asdict(cfg.dysa),
        "latency_repetitions": cfg.latency_repetitions,
        "output_dir": cfg.output_dir,
    }
