"""Command-line front end.

Subcommands cover the full batch workflow: ``generate`` a synthetic labeled
cohort, ``evaluate`` the strategies against each other under cross-validation,
``train`` one model to an artifact, ``feedback`` to render summaries from an
artifact, and ``inspect-features`` to show the classifier's view of a record.

Exit codes: 0 on success, 2 for validation problems (bad arguments, malformed
files, mismatched registries), 1 for unexpected internal errors. With
``--json-errors`` failures are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .domain import (
    Dataset,
    default_registry,
    load_dataset,
    load_registry,
    save_dataset,
)
from .errors import ValidationError
from .evaluation import (
    AGGREGATES,
    EvalOptions,
    comparison_report,
    render_table,
    report_to_json,
    train_method,
)
from .features import FEATURE_MODES, extract_features
from .mlc import (
    MAJORITY_MODES,
    ChainPayload,
    BrPayload,
    LpPayload,
    MajorityPayload,
    RakelConfig,
    RakelPayload,
    STRATEGIES,
)
from .model_io import load_model, save_model
from .nlg import feedback_for_record, render_text, summary_to_json
from .synth import (
    achieved_correlations,
    default_synth_config,
    generate_dataset,
    load_synth_config,
)
from .tree import CRITERIA, TreeConfig, tree_stats

SEED_ENV_VAR = "RAKELGEN_SEED"

DEFAULT_METHODS = "br,chain-predicted,majority,rakel,chain-real"


def resolve_seed(value: int | None) -> int:
    """Explicit value, else the RAKELGEN_SEED environment variable, else 0."""
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValidationError(
            f"{SEED_ENV_VAR} must be an integer, got {env!r}"
        ) from None


def _load_registry_arg(args):
    if args.registry is None:
        return default_registry()
    return load_registry(args.registry)


def _load_data(args, registry) -> Dataset:
    ds = load_dataset(args.data, registry)
    if len(ds) == 0:
        raise ValidationError(f"{args.data}: dataset is empty")
    return ds


def _parse_methods(text: str) -> tuple[str, ...]:
    methods = tuple(part.strip() for part in text.split(",") if part.strip())
    if not methods:
        raise ValidationError("no methods given")
    return methods


def _parse_chain_order(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValidationError(
            f"chain order must be comma-separated integers, got {text!r}"
        ) from None


def _tree_config(args, seed: int) -> TreeConfig:
    return TreeConfig(
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        split_criterion=args.criterion,
        seed=seed,
    )


def _rakel_config(args, seed: int) -> RakelConfig:
    return RakelConfig(k=args.k, m=args.m, threshold=args.threshold, seed=seed)


def _add_registry_arg(parser):
    parser.add_argument(
        "--registry",
        metavar="PATH",
        default=None,
        help="template registry JSON (default: the packaged registry)",
    )


def _add_seed_arg(parser):
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"RNG seed (default: ${SEED_ENV_VAR} if set, else 0)",
    )


def _add_tree_args(parser):
    parser.add_argument("--max-depth", type=int, default=None, help="tree depth cap")
    parser.add_argument(
        "--min-samples-leaf", type=int, default=1, help="minimum samples per leaf"
    )
    parser.add_argument(
        "--criterion", choices=CRITERIA, default="gini", help="split impurity measure"
    )


def _add_strategy_args(parser):
    _add_tree_args(parser)
    parser.add_argument("--k", type=int, default=3, help="labelset size for rakel")
    parser.add_argument(
        "--m", type=int, default=None, help="ensemble size for rakel (default: 2x labels)"
    )
    parser.add_argument(
        "--threshold", type=float, default=0.5, help="vote threshold for rakel"
    )
    parser.add_argument(
        "--feature-mode", choices=FEATURE_MODES, default="both", help="classifier inputs"
    )
    parser.add_argument(
        "--chain-order",
        metavar="CSV",
        default=None,
        help="label index order for chains (default: registry order)",
    )
    parser.add_argument(
        "--majority-mode", choices=MAJORITY_MODES, default="per-label"
    )
    parser.add_argument(
        "--n-jobs", type=int, default=1, help="threads for per-label/member training"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rakelgen",
        description="Select and render feedback templates from weekly student data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--json-errors",
        action="store_true",
        help="report failures as a JSON object on stderr",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labeled cohort")
    p.add_argument("--out", required=True, metavar="PATH", help="output JSON Lines file")
    p.add_argument("--count", type=int, default=None, help="number of students")
    p.add_argument("--weeks", type=int, default=None, help="weeks per series")
    p.add_argument(
        "--expert-noise", type=float, default=None, help="annotation redraw probability"
    )
    p.add_argument("--experts", type=int, default=None, help="number of annotators")
    p.add_argument(
        "--config", metavar="PATH", default=None, help="synth config JSON (default: packaged)"
    )
    _add_registry_arg(p)
    _add_seed_arg(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="compare strategies under cross-validation")
    p.add_argument("--data", required=True, metavar="PATH", help="labeled JSON Lines dataset")
    p.add_argument(
        "--methods",
        default=DEFAULT_METHODS,
        metavar="CSV",
        help=f"strategies to compare (default: {DEFAULT_METHODS})",
    )
    p.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    p.add_argument(
        "--reference", default="rakel", help="strategy the others are tested against"
    )
    p.add_argument(
        "--aggregate", choices=AGGREGATES, default="pooled", help="metric aggregation"
    )
    p.add_argument(
        "--json", metavar="PATH", default=None, help="also write the report as JSON"
    )
    _add_registry_arg(p)
    _add_seed_arg(p)
    _add_strategy_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train", help="train one strategy and save the model")
    p.add_argument("--data", required=True, metavar="PATH", help="labeled JSON Lines dataset")
    p.add_argument("--method", required=True, choices=STRATEGIES)
    p.add_argument("--out", required=True, metavar="PATH", help="model artifact path")
    _add_registry_arg(p)
    _add_seed_arg(p)
    _add_strategy_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("feedback", help="render feedback summaries from a model")
    p.add_argument("--data", required=True, metavar="PATH", help="JSON Lines dataset")
    p.add_argument("--model", required=True, metavar="PATH", help="model artifact")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", metavar="PATH", default=None, help="write here instead of stdout")
    p.add_argument(
        "--trend-tolerance",
        type=float,
        default=0.05,
        help="|slope| at or below which a trend reads as stable",
    )
    _add_registry_arg(p)
    p.set_defaults(func=cmd_feedback)

    p = sub.add_parser(
        "inspect-features", help="show the feature vector extracted from records"
    )
    p.add_argument("--data", required=True, metavar="PATH", help="JSON Lines dataset")
    p.add_argument("--student", default=None, help="restrict to one student id")
    p.add_argument("--mode", choices=FEATURE_MODES, default="derived")
    _add_registry_arg(p)
    p.set_defaults(func=cmd_inspect_features)

    return parser


def cmd_generate(args) -> int:
    registry = _load_registry_arg(args)
    if args.config is None:
        config = default_synth_config()
    else:
        config = load_synth_config(args.config)
    overrides = {}
    if args.count is not None:
        overrides["n_students"] = args.count
    if args.weeks is not None:
        overrides["weeks"] = args.weeks
    if args.expert_noise is not None:
        overrides["expert_noise"] = args.expert_noise
    if args.experts is not None:
        overrides["expert_count"] = args.experts
    if args.seed is not None or os.environ.get(SEED_ENV_VAR) is not None:
        overrides["seed"] = resolve_seed(args.seed)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    ds = generate_dataset(config, registry)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} records to {args.out}")
    for a, b, target, achieved in achieved_correlations(ds, config.correlation_pairs):
        print(f"correlation {a}/{b}: target {target:g}, achieved {achieved:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    registry = _load_registry_arg(args)
    ds = _load_data(args, registry)
    seed = resolve_seed(args.seed)
    opts = EvalOptions(
        n_folds=args.folds,
        seed=seed,
        feature_mode=args.feature_mode,
        aggregate=args.aggregate,
        tree_config=_tree_config(args, seed),
        rakel_config=_rakel_config(args, seed),
        chain_order=_parse_chain_order(args.chain_order),
        majority_mode=args.majority_mode,
        n_jobs=args.n_jobs,
    )
    report = comparison_report(ds, _parse_methods(args.methods), args.reference, opts)
    print(render_table(report))
    if args.json is not None:
        payload = json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n"
        Path(args.json).write_text(payload, encoding="utf-8")
    return 0


def cmd_train(args) -> int:
    registry = _load_registry_arg(args)
    ds = _load_data(args, registry)
    seed = resolve_seed(args.seed)
    opts = EvalOptions(
        seed=seed,
        feature_mode=args.feature_mode,
        tree_config=_tree_config(args, seed),
        rakel_config=_rakel_config(args, seed),
        chain_order=_parse_chain_order(args.chain_order),
        majority_mode=args.majority_mode,
        n_jobs=args.n_jobs,
    )
    model = train_method(args.method, ds, opts)
    save_model(model, registry, args.out)
    print(f"strategy: {model.strategy}")
    print(f"records: {len(ds)}")
    print(f"labels: {model.n_labels}")
    print(f"weeks: {model.weeks}")
    payload = model.payload
    if isinstance(payload, (BrPayload, ChainPayload)):
        stats = [tree_stats(t) for t in payload.trees]
        print(f"trees: {len(stats)}")
        print(f"total nodes: {sum(s['nodes'] for s in stats)}")
        print(f"max depth: {max(s['depth'] for s in stats)}")
    elif isinstance(payload, LpPayload):
        stats = tree_stats(payload.tree)
        print(f"classes: {len(payload.classes)}")
        print(f"nodes: {stats['nodes']}")
        print(f"depth: {stats['depth']}")
    elif isinstance(payload, RakelPayload):
        print(f"members: {len(payload.members)}")
        print(f"k: {payload.config.k}")
        print(f"threshold: {payload.config.threshold}")
    elif isinstance(payload, MajorityPayload):
        print(f"set bits: {sum(payload.bits)}")
    print(f"saved: {args.out}")
    return 0


def cmd_feedback(args) -> int:
    registry = _load_registry_arg(args)
    ds = _load_data(args, registry)
    model = load_model(args.model, registry)
    if model.weeks != ds.weeks:
        raise ValidationError(
            f"model was trained on {model.weeks}-week series, dataset has {ds.weeks}"
        )
    summaries = [
        feedback_for_record(model, record, registry, args.trend_tolerance)
        for record in ds.records
    ]
    if args.format == "json":
        text = json.dumps([summary_to_json(s) for s in summaries], indent=2) + "\n"
    else:
        text = "\n\n".join(render_text(s) for s in summaries) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_inspect_features(args) -> int:
    registry = _load_registry_arg(args)
    ds = _load_data(args, registry)
    records = ds.records
    if args.student is not None:
        records = tuple(r for r in records if r.student_id == args.student)
        if not records:
            raise ValidationError(f"no record with student id {args.student!r}")
    for record in records:
        fv = extract_features(record, args.mode)
        print(f"{record.student_id}:")
        for (factor, name), value in zip(fv.schema, fv.values):
            print(f"  {factor.key}.{name} = {value:g}")
    return 0


def _emit_error(json_errors: bool, kind: str, message: str) -> None:
    if json_errors:
        print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    else:
        print(f"rakelgen: {kind} error: {message}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _emit_error(args.json_errors, "validation", str(exc))
        return 2
    except Exception as exc:  # pragma: no cover - defensive catch-all
        _emit_error(args.json_errors, "internal", f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
