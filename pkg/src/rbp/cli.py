"""Command line entry points.

Subcommands cover the whole offline loop: build rule matrices from
annotation CSVs, train the classification head, score instance files
into detections, evaluate detections against ground truth, generate
synthetic benchmarks, and serve the tuning API. Every failure exits
nonzero with a single machine-readable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .attention import (
    Params,
    init_attention_params,
    init_head_params,
    load_instances,
)
from .errors import ConfigError, EngineError
from .evaluation import (
    SETTINGS,
    evaluate,
    format_report_table,
    load_detections,
    load_gt,
    write_detections,
    write_report,
)
from .pipeline import detections_from_instances
from .rules import (
    aggregate_annotations,
    all_ones,
    booleanize,
    load_annotations,
    load_rules,
    rules_to_dict,
    save_rules,
    validate_rules,
    write_heatmap_csv,
)
from .synth import SynthConfig, generate_benchmark, write_benchmark
from .taxonomy import load_class_table, partition_by_rarity
from .training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("rbp.cli")

LOG_LEVELS = {"debug", "info", "warning", "error"}


def _setup_logging() -> None:
    level = os.environ.get("RBP_LOG", "warning").strip().lower()
    if level not in LOG_LEVELS:
        level = "warning"
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_partition(args):
    table = load_class_table(args.classes)
    return table, partition_by_rarity(table, args.rarity_threshold)


# ---------------------------------------------------------------- rules


def cmd_rules_aggregate(args) -> int:
    table, partition = _load_partition(args)
    sets = load_annotations(args.annotations)
    matrix = aggregate_annotations(sets, table, partition)
    _emit(rules_to_dict(matrix), args.out)
    return 0


def cmd_rules_booleanize(args) -> int:
    matrix = booleanize(load_rules(args.rules), args.threshold)
    _emit(rules_to_dict(matrix), args.out)
    return 0


def cmd_rules_allones(args) -> int:
    table = load_class_table(args.classes)
    _emit(rules_to_dict(all_ones(table)), args.out)
    return 0


def cmd_rules_validate(args) -> int:
    table, partition = _load_partition(args)
    report = validate_rules(load_rules(args.rules), partition)
    payload = {
        "ok": report.ok,
        "violations": [
            {"class_id": cid, "problem": msg} for cid, msg in report.violations
        ],
    }
    _emit(payload, args.out)
    if not report.ok:
        problems = "; ".join(f"class {cid}: {msg}" for cid, msg in report.violations)
        print(
            json.dumps({"error": "validation", "message": problems}),
            file=sys.stderr,
        )
        return 3
    return 0


def cmd_rules_heatmap(args) -> int:
    write_heatmap_csv(load_rules(args.rules), args.out)
    return 0


# ----------------------------------------------------------- train/score


def _train_config_from_args(args) -> TrainConfig:
    if args.config:
        cfg = TrainConfig.load(args.config)
    else:
        cfg = TrainConfig()
    overrides = {}
    for field in ("learning_rate", "iterations", "batch_size", "seed", "rules_at"):
        value = getattr(args, field)
        if value is not None:
            overrides[field] = value
    if args.train_attention:
        overrides["train_attention"] = True
    if overrides:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def cmd_train(args) -> int:
    table = load_class_table(args.classes)
    instances = load_instances(args.instances)
    if not instances:
        raise ConfigError("cannot train on an empty instance file")
    rules = load_rules(args.rules) if args.rules else None
    cfg = _train_config_from_args(args)
    d = instances[0].parts.shape[1]
    d_o = instances[0].object_feature.shape[0]
    init = Params(
        attention=init_attention_params(d, d_o, hidden=args.hidden, seed=cfg.seed),
        head=init_head_params(table, d, seed=cfg.seed + 1),
    )
    params, report = train(instances, table, cfg, rules=rules, init=init)
    save_checkpoint(params, cfg, cfg.iterations, args.out)
    log.info("final loss %.6f over %d iterations", report.final_loss, cfg.iterations)
    if args.loss_out:
        Path(args.loss_out).write_text(
            json.dumps({"losses": report.losses}, indent=2) + "\n"
        )
    return 0


def cmd_score(args) -> int:
    load_class_table(args.classes)  # fail early on a bad table
    instances = load_instances(args.instances)
    params, _, _ = load_checkpoint(args.params)
    rules = load_rules(args.rules) if args.rules else None
    dets = detections_from_instances(instances, params, rules, fusion=args.fusion)
    if args.out:
        write_detections(dets, args.out)
    else:
        for d in dets:
            print(
                json.dumps(
                    {
                        "image_id": d.image_id,
                        "class_id": d.class_id,
                        "score": d.score,
                        "human_box": d.human_box.as_list(),
                        "object_box": d.object_box.as_list(),
                    }
                )
            )
    return 0


def cmd_eval(args) -> int:
    table, partition = _load_partition(args)
    report = evaluate(
        load_detections(args.dets),
        load_gt(args.gt),
        table,
        partition,
        setting=args.setting,
        iou_thresh=args.iou_threshold,
    )
    if args.out:
        write_report(report, args.out)
        print(format_report_table(report))
    else:
        _emit(report.to_dict(), None)
        print(format_report_table(report), file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_classes=args.n_classes,
        n_rare=args.n_rare,
        feature_dim=args.feature_dim,
        object_feature_dim=args.object_feature_dim,
        shots_per_rare=args.shots_per_rare,
        shots_per_common=args.shots_per_common,
        test_per_class=args.test_per_class,
        noise_std=args.noise_std,
        rule_sparsity=args.rule_sparsity,
        rarity_threshold=args.rarity_threshold,
        seed=args.seed,
    )
    dataset = generate_benchmark(cfg)
    write_benchmark(dataset, args.out_dir)
    log.info(
        "wrote benchmark with %d classes to %s", cfg.n_classes, args.out_dir
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionState, create_app

    state = SessionState.load(
        args.classes,
        args.instances,
        args.gt,
        args.params,
        rules_path=args.rules,
        rarity_threshold=args.rarity_threshold,
        fusion=args.fusion,
        iou_thresh=args.iou_threshold,
        save_path=args.save_path,
    )
    app = create_app(state, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ----------------------------------------------------------------- parser


def _add_rarity(p) -> None:
    p.add_argument(
        "--rarity-threshold",
        type=int,
        default=10,
        help="classes with train_count strictly below this are rare",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbp",
        description="part-state rule scoring tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rules = sub.add_parser("rules", help="build and inspect rule matrices")
    rules_sub = rules.add_subparsers(dest="rules_command", required=True)

    p = rules_sub.add_parser("aggregate", help="average annotator CSVs into a decimal matrix")
    p.add_argument("--annotations", required=True, help="annotation CSV path")
    p.add_argument("--classes", required=True, help="class table CSV path")
    _add_rarity(p)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_rules_aggregate)

    p = rules_sub.add_parser("booleanize", help="threshold a decimal matrix")
    p.add_argument("--rules", required=True, help="decimal rules JSON path")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_rules_booleanize)

    p = rules_sub.add_parser("allones", help="control matrix of ones")
    p.add_argument("--classes", required=True)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_rules_allones)

    p = rules_sub.add_parser("validate", help="check a rules file against a class table")
    p.add_argument("--rules", required=True)
    p.add_argument("--classes", required=True)
    _add_rarity(p)
    p.add_argument("--out", help="write the report JSON here instead of stdout")
    p.set_defaults(func=cmd_rules_validate)

    p = rules_sub.add_parser("heatmap", help="dump a matrix as a CSV grid")
    p.add_argument("--rules", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_rules_heatmap)

    p = sub.add_parser("train", help="fit the classification head")
    p.add_argument("--classes", required=True)
    p.add_argument("--instances", required=True, help="training instances JSONL")
    p.add_argument("--rules", help="rules JSON used during training")
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rules-at", choices=["both", "inference"], default=None)
    p.add_argument("--train-attention", action="store_true")
    p.add_argument("--hidden", type=int, default=8, help="attention hidden width")
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--loss-out", help="optional loss curve JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score instances into detections")
    p.add_argument("--classes", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--params", required=True, help="checkpoint JSON path")
    p.add_argument("--rules", help="rules JSON applied at inference")
    p.add_argument("--fusion", choices=["mean", "product"], default="mean")
    p.add_argument("--out", help="detections JSONL path (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--dets", required=True, help="detections JSONL")
    p.add_argument("--gt", required=True, help="ground truth JSONL")
    p.add_argument("--classes", required=True)
    p.add_argument("--setting", choices=sorted(SETTINGS), default="default")
    _add_rarity(p)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-classes", type=int, default=30)
    p.add_argument("--n-rare", type=int, default=12)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--object-feature-dim", type=int, default=8)
    p.add_argument("--shots-per-rare", type=int, default=5)
    p.add_argument("--shots-per-common", type=int, default=30)
    p.add_argument("--test-per-class", type=int, default=8)
    p.add_argument("--noise-std", type=float, default=0.5)
    p.add_argument("--rule-sparsity", type=float, default=0.3)
    _add_rarity(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the tuning API")
    p.add_argument("--classes", required=True)
    p.add_argument("--instances", required=True, help="scored test instances JSONL")
    p.add_argument("--gt", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--rules", help="rules JSON seeding decimal/boolean variants")
    _add_rarity(p)
    p.add_argument("--fusion", choices=["mean", "product"], default="mean")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--save-path", help="default path for saving the custom variant")
    p.add_argument("--ui", help="static directory served at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
