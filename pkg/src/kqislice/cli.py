"""Command-line entry point.

    kqislice gen-data  [--config C] [--seed S] [--out DIR]
    kqislice train     --dataset CSV [--config C] [--seed S] [--out DIR]
    kqislice eval      --registry JSON --dataset CSV [--config C] [--out DIR]
    kqislice negotiate --registry JSON --request JSON [--config C] [--out DIR]
    kqislice dysa      --registry JSON --trace CSV --targets JSON [--config C] [--out DIR]
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .core import Comparator, KqiId, ZeroVarianceError, feature_matrix, r_squared, target_vector
from .dysa import (
    KqiTarget,
    SecurityMargin,
    TraceFormatError,
    load_trace,
    run_monitor,
    save_timeline,
)
from .modsys import (
    FitError,
    ModelRegistry,
    RegressorKind,
    estimation_latency,
    load_registry,
    save_registry,
    write_score_table,
)
from .netsim import DEFAULT_PARAMS, NetsimParams, params_from_dict
from .osna import VerticalPolicy, negotiate, request_from_json, write_log
from .pipeline import NETSIM_KEY, train_registry
from .sea import DatasetFormatError, campaign_duration, execute_campaign, load_dataset, save_dataset

log = logging.getLogger("kqislice")


class CommandError(RuntimeError):
    pass


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _registry_params(registry: ModelRegistry) -> NetsimParams:
    d = registry.metadata.get(NETSIM_KEY)
    return params_from_dict(d) if d else DEFAULT_PARAMS


def _fmt(v: float | None) -> str:
    return "nan" if v is None or math.isnan(v) else repr(float(v))


def cmd_gen_data(cfg: RunConfig, out: Path) -> Path:
    plan = cfg.plan()
    rows = execute_campaign(plan, cfg.simulator())
    path = out / "dataset.csv"
    save_dataset(rows, path)
    print(f"campaign duration T = {campaign_duration(plan)!r} s")
    print(f"rows written: {len(rows)} -> {path}")
    return path


def cmd_train(cfg: RunConfig, dataset_path: Path, out: Path) -> Path:
    rows = load_dataset(dataset_path)
    if not rows:
        raise CommandError(f"{dataset_path}: dataset is empty")
    try:
        run = train_registry(rows, cfg)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    registry = run.registry
    reg_path = out / "registry.json"
    save_registry(registry, reg_path)
    write_score_table(registry, out / "scores.csv")
    save_dataset(run.test, out / "holdout.csv")
    with open(out / "selection.csv", "w", encoding="utf-8") as fh:
        fh.write("kqi,kind,cv_r2,holdout_r2,alpha\n")
        for kqi, sel in registry.selected.items():
            fh.write(
                f"{kqi.value},{sel.model.kind.value},{_fmt(sel.cv_score)},"
                f"{_fmt(registry.holdout_r2.get(kqi))},{_fmt(registry.margins.get(kqi))}\n"
            )
    for kqi, sel in registry.selected.items():
        print(
            f"{kqi.value:14s} {sel.model.kind.value:6s} cv R2={sel.cv_score:.4f} "
            f"holdout R2={registry.holdout_r2.get(kqi, float('nan')):.4f}"
        )
    print(f"registry v{registry.version} -> {reg_path}")
    return reg_path


def cmd_eval(cfg: RunConfig, registry_path: Path, dataset_path: Path, out: Path) -> tuple[Path, Path]:
    registry = load_registry(registry_path)
    rows = load_dataset(dataset_path)
    if not rows:
        raise CommandError(f"{dataset_path}: dataset is empty")
    x = feature_matrix(rows)
    kqis = [k for k in KqiId if k in registry.selected]
    estimates = {k: registry.model(k).predict_many(x) for k in kqis}
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", encoding="utf-8") as fh:
        cols = ["row"] + [f"{p}_{k.value}" for k in kqis for p in ("measured", "estimated")]
        fh.write(",".join(cols) + "\n")
        for i, row in enumerate(rows):
            cells = [str(i)]
            for k in kqis:
                cells += [repr(row.kqi.value(k)), repr(float(estimates[k][i]))]
            fh.write(",".join(cells) + "\n")
    for k in kqis:
        try:
            print(f"{k.value:14s} R2={r_squared(target_vector(rows, k), estimates[k]):.4f}")
        except ZeroVarianceError:
            print(f"{k.value:14s} R2=undefined (constant measurements)")

    # Single-prediction latency of every technique fitted on average throughput.
    lat_path = out / "latency.csv"
    models = dict(registry.benchmark) or {registry.model(KqiId.AvgThroughput).kind: registry.model(KqiId.AvgThroughput)}
    with open(lat_path, "w", encoding="utf-8") as fh:
        fh.write("kind,samples,min_us,median_us,p95_us\n")
        for kind in RegressorKind:
            if kind not in models:
                continue
            stats = estimation_latency(models[kind], [x[0]], cfg.latency_repetitions)
            fh.write(f"{kind.value},{stats.count},{stats.min:.3f},{stats.median:.3f},{stats.p95:.3f}\n")
            print(f"{kind.value:6s} median {stats.median:9.2f} us")
    return pred_path, lat_path


def cmd_negotiate(cfg: RunConfig, registry_path: Path, request_path: Path, out: Path) -> Path:
    registry = load_registry(registry_path)
    try:
        with open(request_path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CommandError(f"{request_path}: invalid JSON: {exc}") from None
    try:
        request, policy, max_rounds = request_from_json(data)
    except ValueError as exc:
        raise CommandError(f"{request_path}: {exc}") from None
    policy = policy or VerticalPolicy(budget=float("inf"))
    log_, offer = negotiate(
        policy,
        request,
        registry,
        cfg.catalog,
        max_rounds or cfg.max_rounds,
        cfg.base_rate,
        _registry_params(registry),
    )
    path = out / "negotiation.json"
    write_log(log_, path)
    summary = f"{log_.state} after {len(log_.rounds)} round(s)"
    if offer is not None:
        summary += f": config {offer.config.config_id} ({offer.config.bandwidth} MHz) at price {offer.price!r}"
    print(summary)
    return path


def load_targets(path: Path) -> tuple[list[KqiTarget], dict[KqiId, float]]:
    """Targets file: ``{"targets": [{"kqi", "comparator", "bound"}], "margins": {kqi: alpha}}``."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict) or set(data) - {"targets", "margins"} or "targets" not in data:
        raise CommandError(f"{path}: expected an object with 'targets' and optional 'margins'")
    targets = []
    for i, t in enumerate(data["targets"]):
        if not isinstance(t, dict) or set(t) != {"kqi", "comparator", "bound"}:
            raise CommandError(f"{path}: targets[{i}]: expected keys kqi, comparator, bound")
        try:
            targets.append(KqiTarget(KqiId.parse(t["kqi"]), Comparator.parse(t["comparator"]), float(t["bound"])))
        except (TypeError, ValueError) as exc:
            raise CommandError(f"{path}: targets[{i}]: {exc}") from None
    if not targets:
        raise CommandError(f"{path}: no targets")
    margins = {}
    for name, alpha in data.get("margins", {}).items():
        try:
            margins[KqiId.parse(name)] = float(alpha)
        except (TypeError, ValueError) as exc:
            raise CommandError(f"{path}: margins.{name}: {exc}") from None
    return targets, margins


def cmd_dysa(cfg: RunConfig, registry_path: Path, trace_path: Path, targets_path: Path, out: Path) -> Path:
    registry = load_registry(registry_path)
    trace = load_trace(trace_path)
    targets, overrides = load_targets(targets_path)
    margin = SecurityMargin({**registry.margins, **overrides})
    timeline = run_monitor(
        trace,
        targets,
        registry,
        cfg.catalog,
        margin,
        cfg.dysa.reconfig_time_s,
        cfg.dysa.hysteresis,
        _registry_params(registry),
    )
    path = out / "timeline.csv"
    save_timeline(timeline, targets, path)
    compliant = sum(s.compliant for s in timeline.samples)
    print(
        f"{len(timeline.samples)} samples, {timeline.reconfigurations} reconfiguration(s), "
        f"{compliant} compliant -> {path}"
    )
    return path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON (defaults: reference setup)")
    common.add_argument("--seed", type=int, help="override campaign and cross-validation seeds")
    common.add_argument("--out", help="output directory (default: config output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kqislice", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="run the measurement campaign and write dataset.csv")
    p = sub.add_parser("train", parents=[common], help="select the best regressor per KQI")
    p.add_argument("--dataset", required=True)
    p = sub.add_parser("eval", parents=[common], help="write predictions and latency tables")
    p.add_argument("--registry", required=True)
    p.add_argument("--dataset", required=True)
    p = sub.add_parser("negotiate", parents=[common], help="negotiate a slice request")
    p.add_argument("--registry", required=True)
    p.add_argument("--request", required=True)
    p = sub.add_parser("dysa", parents=[common], help="replay a radio trace through the allocator")
    p.add_argument("--registry", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--targets", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = _out_dir(args, cfg)
        if args.command == "gen-data":
            cmd_gen_data(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, Path(args.dataset), out)
        elif args.command == "eval":
            cmd_eval(cfg, Path(args.registry), Path(args.dataset), out)
        elif args.command == "negotiate":
            cmd_negotiate(cfg, Path(args.registry), Path(args.request), out)
        elif args.command == "dysa":
            cmd_dysa(cfg, Path(args.registry), Path(args.trace), Path(args.targets), out)
    except (ConfigError, CommandError, DatasetFormatError, TraceFormatError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
