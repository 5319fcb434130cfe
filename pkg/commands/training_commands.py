# commands/training_commands.py
# -*- coding: utf-8 -*-
"""Training and ablation commands."""

import logging
import os

from genreg.data import write_csv
from genreg.model import HEADS
from genreg.training import SCHEDULES, VARIANTS, apply_variant
from genreg.vocab import ValueVocabulary
from utils import command_manifest, ensure_dir, parse_int_list, publish_run
from utils.pipeline import (
    GRIDS,
    build_vocabulary,
    evaluate_checkpoint,
    load_dataset,
    run_ablation,
    run_training,
    split_dataset,
    summarize_ablation,
)
from utils.reporting import format_table, write_rows_csv

logger = logging.getLogger(__name__)


def apply_train_flags(args, settings) -> None:
    """Fold train/ablate flags into the settings bundle. A variant goes first so flags can refine it."""
    if getattr(args, "variant", None):
        settings.schedule, settings.train = apply_variant(args.variant, settings.schedule, settings.train)
    if getattr(args, "head", None):
        settings.model.head = args.head
    if getattr(args, "schedule", None):
        settings.schedule.strategy = args.schedule
    if getattr(args, "p", None) is not None:
        if settings.schedule.strategy == "fixed":
            settings.schedule.fixed_p = args.p
        else:
            settings.schedule.p0 = args.p
    if getattr(args, "nw", None) is not None:
        settings.train.mixup_window = args.nw
    if getattr(args, "clem", None) == "on":
        settings.train.clem_enabled = True
    elif getattr(args, "clem", None) == "off":
        settings.train.clem_enabled = False
        settings.train.mixup_enabled = False
    if getattr(args, "steps", None) is not None:
        settings.train.steps = args.steps
    if getattr(args, "seed", None) is not None:
        settings.train.seed = args.seed


def cmd_train(args, settings) -> int:
    """Train one head; writes checkpoint, metrics log, test split and test report."""
    apply_train_flags(args, settings)
    head = settings.model.head
    dataset = load_dataset(settings, args.data, args.schema)
    train_set, val_set, test_set = split_dataset(dataset, settings, settings.data.seed)
    out_dir = ensure_dir(args.out or os.path.join(settings.toolkit.output_dir, f"train_{head}"))

    vocab = None
    if head == "gr":
        if args.vocab:
            vocab = ValueVocabulary.load(args.vocab)
        else:
            vocab = build_vocabulary(settings.vocab.strategy, train_set.targets, settings.vocab)

    manifest = command_manifest(
        "train", args, settings, [settings.data.seed, settings.train.seed], [args.data, args.schema, args.vocab]
    )
    outcome = run_training(settings, train_set, val_set, test_set, vocab, out_dir, manifest.manifest_id, label=head)

    outputs = [os.path.join(out_dir, "model.ckpt"), os.path.join(out_dir, "metrics.jsonl")]
    if vocab is not None:
        vocab_path = os.path.join(out_dir, "vocab.json")
        vocab.save(vocab_path)
        outputs.append(vocab_path)
    test_path = os.path.join(out_dir, "test.csv")
    write_csv(test_set, test_path)
    outputs.append(test_path)

    evaluation = evaluate_checkpoint(outcome.checkpoint, test_set, seed=settings.train.seed)
    report_path = os.path.join(out_dir, "test_report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(evaluation.report.to_json())
    outputs.append(report_path)

    for path in outputs:
        manifest.add_output(path)
    manifest.write(out_dir)
    publish_run(settings, manifest, outcome.result.records)

    report = evaluation.report
    print(format_table([{
        "head": head,
        "best_step": outcome.result.best_step,
        "test_mae": report.mae,
        "test_xauc": report.xauc,
        "eos_rate": report.eos_rate,
        "out_dir": out_dir,
    }]))
    return 0


def cmd_ablate(args, settings) -> int:
    """Run a grid over seeds and write per-run and seed-averaged CSV tables."""
    apply_train_flags(args, settings)
    seeds = parse_int_list(args.seeds) or [settings.train.seed]
    rows = [r.strip() for r in args.rows.split(",")] if args.rows else None
    if rows:
        unknown = [r for r in rows if r not in GRIDS[args.grid]]
        if unknown:
            args.parser.error(f"unknown {args.grid} rows: {', '.join(unknown)}")

    dataset = load_dataset(settings, args.data, args.schema)
    out_dir = ensure_dir(args.out or os.path.join(settings.toolkit.output_dir, f"ablate_{args.grid}"))
    manifest = command_manifest("ablate", args, settings, seeds, [args.data, args.schema])

    results = run_ablation(settings, dataset, args.grid, seeds, rows)
    summary = summarize_ablation(results)
    manifest.add_output(write_rows_csv(results, os.path.join(out_dir, "ablation_runs.csv")))
    manifest.add_output(write_rows_csv(summary, os.path.join(out_dir, "ablation_summary.csv")))
    manifest.write(out_dir)
    publish_run(settings, manifest)

    print(format_table(summary))
    return 0


def _add_training_flags(p):
    p.add_argument("--data", help="Training CSV (default: synthetic data from the data config section)")
    p.add_argument("--schema", help="Optional YAML dataset schema")
    p.add_argument("--schedule", choices=SCHEDULES, help="Ground-truth sampling schedule")
    p.add_argument("--p", type=float, help="Fixed p for --schedule fixed, otherwise p0")
    p.add_argument("--nw", type=int, help="Embedding mixup window size")
    p.add_argument("--clem", choices=("on", "off"), help="Two-pass curriculum training; off means teacher forcing only")
    p.add_argument("--variant", choices=list(VARIANTS), help="Ablation variant applied before the other flags")
    p.add_argument("--steps", type=int, help="Optimizer steps (default: train.steps)")


def setup(subparsers):
    p = subparsers.add_parser("train", help="Train a gr, vr or ordinal model.")
    _add_training_flags(p)
    p.add_argument("--head", choices=HEADS, help="Output head (default: model.head)")
    p.add_argument("--vocab", help="Vocabulary JSON (default: built from the training split)")
    p.add_argument("--seed", type=int, help="Training seed (default: train.seed)")
    p.add_argument("--out", help="Output directory (default: <output_dir>/train_<head>)")
    p.set_defaults(handler=cmd_train, parser=p)

    p = subparsers.add_parser("ablate", help="Run an ablation grid over several seeds.")
    _add_training_flags(p)
    p.add_argument("--grid", choices=list(GRIDS), default="clem", help="clem variants, heads or vocabulary strategies")
    p.add_argument("--rows", help="Comma-separated subset of the grid's rows")
    p.add_argument("--seeds", default="0,1,2", help="Comma-separated training seeds")
    p.add_argument("--out", help="Output directory (default: <output_dir>/ablate_<grid>)")
    p.set_defaults(handler=cmd_ablate, parser=p)
