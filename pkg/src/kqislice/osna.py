"""Operator slice negotiation agent.

The operator quotes the cheapest configuration whose estimated KQIs meet the
request; the vertical either accepts (price within budget) or concedes by
applying the next step of its concession list.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Sequence

from .core import Comparator, KqiId, RadioConditions, SliceConfig, check_bound
from .modsys import ModelRegistry
from .netsim import DEFAULT_PARAMS, NetsimParams, serving_features

WEIGHT_TOLERANCE = 1e-9
AGREED = "Agreed"
FAILED = "Failed"


@dataclass(frozen=True)
class Requirement:
    kqi: KqiId
    comparator: Comparator
    bound: float
    required_fraction: float = 1.0

    def __post_init__(self) -> None:
        check_bound(self.kqi, self.bound)
        if not 0.0 < self.required_fraction <= 1.0:
            raise ValueError(f"required_fraction must be in (0, 1], got {self.required_fraction!r}")


@dataclass(frozen=True)
class Scenario:
    radio: RadioConditions
    weight: float


@dataclass(frozen=True)
class SliceRequest:
    requirements: tuple[Requirement, ...]
    duration: float  # hours
    scenarios: tuple[Scenario, ...]

    def __post_init__(self) -> None:
        if not self.requirements:
            raise ValueError("a request needs at least one requirement")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"duration must be positive, got {self.duration!r}")
        if not self.scenarios:
            raise ValueError("a request needs at least one radio scenario")
        if any(s.weight < 0 for s in self.scenarios):
            raise ValueError("scenario weights must be nonnegative")
        total = sum(s.weight for s in self.scenarios)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"scenario weights sum to {total!r}, expected 1")

    @property
    def kqis(self) -> list[KqiId]:
        return list(dict.fromkeys(r.kqi for r in self.requirements))


@dataclass(frozen=True)
class Offer:
    config: SliceConfig
    price: float | None
    predicted: tuple[dict[KqiId, float], ...]  # one mapping per scenario
    compliant: bool


def evaluate_config(
    config: SliceConfig,
    request: SliceRequest,
    registry: ModelRegistry,
    params: NetsimParams = DEFAULT_PARAMS,
) -> Offer:
    """Estimate the requested KQIs per scenario and check every requirement's time fraction."""
    missing = [k.value for k in request.kqis if k not in registry.selected]
    if missing:
        raise KeyError(f"registry has no model for {missing}")
    predicted = []
    for scenario in request.scenarios:
        x = serving_features(scenario.radio, config, params)
        predicted.append({k: registry.predict(k, x) for k in request.kqis})
    compliant = True
    for req in request.requirements:
        met = sum(
            s.weight for s, est in zip(request.scenarios, predicted) if req.comparator.holds(est[req.kqi], req.bound)
        )
        if met < req.required_fraction - WEIGHT_TOLERANCE:
            compliant = False
            break
    return Offer(config, None, tuple(predicted), compliant)


def price(config: SliceConfig, duration: float, base_rate: float = 1.0) -> float:
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    if not base_rate > 0:
        raise ValueError(f"base_rate must be positive, got {base_rate!r}")
    return base_rate * float(config.bandwidth) * duration


def best_offer(
    request: SliceRequest,
    registry: ModelRegistry,
    catalog: Sequence[SliceConfig],
    base_rate: float = 1.0,
    params: NetsimParams = DEFAULT_PARAMS,
) -> Offer | None:
    """Cheapest compliant configuration; ties go to the smaller bandwidth, then lower id."""
    if not catalog:
        raise ValueError("empty configuration catalog")
    best: Offer | None = None
    best_key = None
    for config in catalog:
        offer = evaluate_config(config, request, registry, params)
        if not offer.compliant:
            continue
        offer = dataclasses.replace(offer, price=price(config, request.duration, base_rate))
        key = (offer.price, float(config.bandwidth), config.config_id)
        if best_key is None or key < best_key:
            best, best_key = offer, key
    return best


@dataclass(frozen=True)
class Concession:
    """One step the vertical is willing to give.

    ``relax`` moves the bound of the ``kqi`` requirement(s) by ``step`` toward
    the lenient side, ``duration`` shortens the demand by ``step`` hours and
    ``budget`` raises the budget by ``step``.
    """

    kind: str
    step: float
    kqi: KqiId | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("relax", "duration", "budget"):
            raise ValueError(f"unknown concession type {self.kind!r}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError("concession step must be positive")
        if self.kind == "relax" and self.kqi is None:
            raise ValueError("a relax concession needs a kqi")


@dataclass(frozen=True)
class VerticalPolicy:
    budget: float
    concessions: tuple[Concession, ...] = ()


@dataclass(frozen=True)
class RoundRecord:
    round: int
    request: SliceRequest
    budget: float
    offer: Offer | None
    decision: str  # accept | concede | refuse | timeout
    note: str = ""


@dataclass(frozen=True)
class NegotiationLog:
    rounds: tuple[RoundRecord, ...]
    state: str

    @property
    def final_offer(self) -> Offer | None:
        return self.rounds[-1].offer if self.state == AGREED else None


def _relax(req: Requirement, step: float) -> Requirement:
    lo, hi = req.kqi.bounds
    if req.comparator is Comparator.GE:
        bound = max(lo, req.bound - step)
    else:
        bound = min(hi, req.bound + step)
    # Keep decimal steps readable: 0.95 - 0.05 should read 0.9.
    return dataclasses.replace(req, bound=round(bound, 12))


def apply_concession(
    concession: Concession, request: SliceRequest, budget: float
) -> tuple[SliceRequest, float] | None:
    """Returns the updated (request, budget), or None if the step changes nothing."""
    if concession.kind == "budget":
        return request, budget + concession.step
    if concession.kind == "duration":
        duration = round(request.duration - concession.step, 12)
        if duration <= 0:
            return None
        return dataclasses.replace(request, duration=duration), budget
    reqs = tuple(_relax(r, concession.step) if r.kqi is concession.kqi else r for r in request.requirements)
    if reqs == request.requirements:
        return None
    return dataclasses.replace(request, requirements=reqs), budget


def negotiate(
    policy: VerticalPolicy,
    request: SliceRequest,
    registry: ModelRegistry,
    catalog: Sequence[SliceConfig],
    max_rounds: int = 10,
    base_rate: float = 1.0,
    params: NetsimParams = DEFAULT_PARAMS,
) -> tuple[NegotiationLog, Offer | None]:
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    budget = policy.budget
    pending = list(policy.concessions)
    rounds: list[RoundRecord] = []
    for r in range(1, max_rounds + 1):
        offer = best_offer(request, registry, catalog, base_rate, params)
        if offer is not None and offer.price <= budget:
            rounds.append(RoundRecord(r, request, budget, offer, "accept"))
            return NegotiationLog(tuple(rounds), AGREED), offer
        note = "no compliant configuration" if offer is None else f"price {offer.price!r} over budget"
        if r == max_rounds:
            rounds.append(RoundRecord(r, request, budget, offer, "timeout", note))
            break
        updated = None
        while pending and updated is None:
            updated = apply_concession(pending.pop(0), request, budget)
        if updated is None:
            rounds.append(RoundRecord(r, request, budget, offer, "refuse", note))
            break
        rounds.append(RoundRecord(r, request, budget, offer, "concede", note))
        request, budget = updated
    return NegotiationLog(tuple(rounds), FAILED), None


# JSON schemas ---------------------------------------------------------------


def _expect_keys(obj: dict, where: str, required: set[str], optional: set[str] = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected an object")
    unknown = set(obj) - required - optional
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ValueError(f"{where}: missing key(s) {sorted(missing)}")


def _field(where: str, fn, *args):
    try:
        return fn(*args)
    except (TypeError, ValueError, KeyError) as exc:
        raise ValueError(f"{where}: {exc}") from None


def radio_from_json(d: dict, where: str) -> RadioConditions:
    return _field(where, lambda: RadioConditions(float(d["rsrp_dbm"]), float(d["rsrq_db"]), float(d["rssi_dbm"])))


def radio_to_json(radio: RadioConditions) -> dict:
    return {"rsrp_dbm": radio.rsrp, "rsrq_db": radio.rsrq, "rssi_dbm": radio.rssi}


def request_from_json(d: dict) -> tuple[SliceRequest, VerticalPolicy | None, int | None]:
    """Parse a request file: requirements, duration, scenarios and optionally the vertical's policy."""
    _expect_keys(d, "request", {"requirements", "duration_hours", "scenarios"}, {"policy", "max_rounds"})
    reqs = []
    for i, r in enumerate(d["requirements"]):
        where = f"requirements[{i}]"
        _expect_keys(r, where, {"kqi", "comparator", "bound"}, {"required_fraction"})
        reqs.append(
            _field(
                where,
                lambda: Requirement(
                    KqiId.parse(r["kqi"]),
                    Comparator.parse(r["comparator"]),
                    float(r["bound"]),
                    float(r.get("required_fraction", 1.0)),
                ),
            )
        )
    scenarios = []
    for i, s in enumerate(d["scenarios"]):
        where = f"scenarios[{i}]"
        _expect_keys(s, where, {"rsrp_dbm", "rsrq_db", "rssi_dbm", "weight"})
        scenarios.append(Scenario(radio_from_json(s, where), _field(where + ".weight", float, s["weight"])))
    request = _field(
        "request", lambda: SliceRequest(tuple(reqs), float(d["duration_hours"]), tuple(scenarios))
    )
    policy = None
    if "policy" in d:
        p = d["policy"]
        _expect_keys(p, "policy", {"budget"}, {"concessions"})
        concessions = []
        for i, c in enumerate(p.get("concessions", [])):
            where = f"policy.concessions[{i}]"
            _expect_keys(c, where, {"type", "step"}, {"kqi"})
            concessions.append(
                _field(
                    where,
                    lambda: Concession(
                        c["type"], float(c["step"]), KqiId.parse(c["kqi"]) if "kqi" in c else None
                    ),
                )
            )
        policy = VerticalPolicy(_field("policy.budget", float, p["budget"]), tuple(concessions))
    max_rounds = None
    if "max_rounds" in d:
        max_rounds = _field("max_rounds", int, d["max_rounds"])
        if max_rounds < 1:
            raise ValueError("max_rounds: must be >= 1")
    return request, policy, max_rounds


def request_to_json(request: SliceRequest) -> dict:
    return {
        "requirements": [
            {
                "kqi": r.kqi.value,
                "comparator": r.comparator.value,
                "bound": r.bound,
                "required_fraction": r.required_fraction,
            }
            for r in request.requirements
        ],
        "duration_hours": request.duration,
        "scenarios": [{**radio_to_json(s.radio), "weight": s.weight} for s in request.scenarios],
    }


def offer_to_json(offer: Offer | None) -> dict | None:
    if offer is None:
        return None
    return {
        "config_id": offer.config.config_id,
        "bandwidth_mhz": float(offer.config.bandwidth),
        "price": offer.price,
        "compliant": offer.compliant,
        "predicted": [{k.value: v for k, v in est.items()} for est in offer.predicted],
    }


def log_to_json(log: NegotiationLog) -> dict:
    final = log.final_offer
    return {
        "state": log.state,
        "rounds": len(log.rounds),
        "final_offer": offer_to_json(final),
        "log": [
            {
                "round": rec.round,
                "request": request_to_json(rec.request),
                "budget": rec.budget if math.isfinite(rec.budget) else None,
                "offer": offer_to_json(rec.offer),
                "decision": rec.decision,
                "note": rec.note,
            }
            for rec in log.rounds
        ],
    }


def write_log(log: NegotiationLog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(log_to_json(log), fh, indent=1)
        fh.write("\n")
