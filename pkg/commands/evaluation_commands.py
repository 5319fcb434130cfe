# commands/evaluation_commands.py
# -*- coding: utf-8 -*-
"""Prediction and evaluation commands."""

import logging
import os

import numpy as np

from genreg.checkpoint import load_checkpoint
from genreg.codec import encode
from genreg.errors import CheckpointError
from genreg.metrics import aggregated_value_embedding, neighbor_prob_difference
from utils import command_manifest, ensure_dir, publish_run
from utils.pipeline import evaluate_checkpoint, load_dataset
from utils.reporting import format_table, write_rows_csv

logger = logging.getLogger(__name__)

# Rows of the aggregated-embedding dump
EMBEDDING_SAMPLES = 500


def _check_features(checkpoint, dataset, path: str) -> None:
    expected = checkpoint.config.feature_dim
    if dataset.feature_dim != expected:
        raise CheckpointError(
            f"Checkpoint '{path}' expects {expected} features, data has {dataset.feature_dim}."
        )


def cmd_predict(args, settings) -> int:
    """Write one prediction row per input row."""
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_dataset(settings, args.data, args.schema, require_target=False)
    _check_features(checkpoint, dataset, args.checkpoint)

    evaluation = evaluate_checkpoint(checkpoint, dataset, apply_mixup=False if args.no_mixup else None,
                                     mixup_window=args.nw)
    rows = []
    if evaluation.generation is not None:
        for row_id, pred in zip(dataset.row_ids, evaluation.generation.predictions):
            rows.append({
                "row_id": int(row_id),
                "y_pred": pred.y_hat,
                "tokens": " ".join(str(i) for i in pred.token_ids),
                "terminated_by": pred.terminated_by,
            })
    else:
        for row_id, value in zip(dataset.row_ids, evaluation.preds):
            rows.append({"row_id": int(row_id), "y_pred": float(value), "tokens": "", "terminated_by": ""})

    out_path = args.out or os.path.join(settings.toolkit.output_dir, "predictions.csv")
    write_rows_csv(rows, out_path, columns=["row_id", "y_pred", "tokens", "terminated_by"])
    logger.info(f"Wrote {len(rows)} predictions to {out_path}")

    manifest = command_manifest("predict", args, settings, [], [args.checkpoint, args.data])
    manifest.add_output(out_path)
    manifest.write(ensure_dir(os.path.dirname(os.path.abspath(out_path))))
    publish_run(settings, manifest)
    return 0


def _write_diagnostics(checkpoint, dataset, evaluation, out_dir: str):
    """Plot-ready CSVs: neighbour probability differences and aggregated value embeddings."""
    vocab = checkpoint.vocab
    paths = []
    probabilities = evaluation.generation.step_probabilities
    if probabilities is not None and len(probabilities):
        diffs = neighbor_prob_difference(probabilities, vocab)
        rows = [{"token_id": vocab.first_value_id + i, "value": v, "neighbor_prob_diff": float(d)}
                for i, (v, d) in enumerate(zip(vocab.value_tokens, diffs))]
        paths.append(write_rows_csv(rows, os.path.join(out_dir, "neighbor_prob_difference.csv")))

    embedding = checkpoint.params["embedding"].data
    rows = []
    for y in dataset.targets:
        if len(rows) >= EMBEDDING_SAMPLES:
            break
        seq = encode(float(y), vocab, checkpoint.config.max_len)
        if y <= 0 or not seq.ids:
            continue
        vector = aggregated_value_embedding(seq.ids, float(y), vocab, embedding)
        row = {"y": float(y)}
        row.update({f"e{j}": float(v) for j, v in enumerate(vector)})
        rows.append(row)
    if rows:
        paths.append(write_rows_csv(rows, os.path.join(out_dir, "aggregated_embeddings.csv")))
    return paths


def cmd_evaluate(args, settings) -> int:
    """EvalReport JSON plus interval and diagnostic CSVs; --compare prints checkpoints side by side."""
    checkpoints = list(args.compare or []) or ([args.checkpoint] if args.checkpoint else [])
    if not checkpoints:
        args.parser.error("give --checkpoint or --compare")
    dataset = load_dataset(settings, args.data, args.schema)
    out_dir = ensure_dir(args.out or os.path.join(settings.toolkit.output_dir, "evaluate"))
    manifest = command_manifest("evaluate", args, settings, [], [args.data, *checkpoints])

    table = []
    for index, path in enumerate(checkpoints):
        checkpoint = load_checkpoint(path)
        _check_features(checkpoint, dataset, path)
        is_gr = checkpoint.config.head == "gr"
        evaluation = evaluate_checkpoint(
            checkpoint, dataset, record_probabilities=is_gr and args.diagnostics,
            interval_width=args.width, seed=args.seed,
        )
        report = evaluation.report
        prefix = "" if len(checkpoints) == 1 else f"{index}_"

        report_path = os.path.join(out_dir, f"{prefix}eval_report.json")
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(report.to_json())
        intervals_path = os.path.join(out_dir, f"{prefix}interval_mae.csv")
        report.intervals_frame().to_csv(intervals_path, index=False, float_format="%.10g", lineterminator="\n")
        preds_path = write_rows_csv(
            [{"y": float(y), "y_pred": float(p)} for y, p in zip(dataset.targets, evaluation.preds)],
            os.path.join(out_dir, f"{prefix}predictions_vs_labels.csv"),
        )
        for output in (report_path, intervals_path, preds_path):
            manifest.add_output(output)
        if is_gr and args.diagnostics:
            diag_dir = ensure_dir(os.path.join(out_dir, f"{prefix}diagnostics"))
            for output in _write_diagnostics(checkpoint, dataset, evaluation, diag_dir):
                manifest.add_output(output)

        table.append({
            "checkpoint": os.path.basename(path) if len(checkpoints) > 1 else path,
            "head": checkpoint.config.head,
            "count": report.count,
            "mae": report.mae,
            "xauc": report.xauc,
            "spearman": report.spearman,
            "eos_rate": report.eos_rate if is_gr else None,
            "mean_pred": float(np.mean(evaluation.preds)) if len(evaluation.preds) else None,
        })

    if len(checkpoints) > 1:
        manifest.add_output(write_rows_csv(table, os.path.join(out_dir, "comparison.csv")))
    manifest.write(out_dir)
    publish_run(settings, manifest)
    print(format_table(table))
    return 0


def setup(subparsers):
    p = subparsers.add_parser("predict", help="Greedy-decode predictions for a CSV of features.")
    p.add_argument("--checkpoint", required=True, help="Model checkpoint")
    p.add_argument("--data", required=True, help="Feature CSV (target column optional)")
    p.add_argument("--schema", help="Optional YAML dataset schema")
    p.add_argument("--no-mixup", action="store_true", help="Feed raw predicted embeddings while decoding")
    p.add_argument("--nw", type=int, help="Mixup window (default: the checkpoint's)")
    p.add_argument("--out", help="Output CSV (default: <output_dir>/predictions.csv)")
    p.set_defaults(handler=cmd_predict, parser=p)

    p = subparsers.add_parser("evaluate", help="Score one checkpoint, or several side by side.")
    p.add_argument("--checkpoint", help="Model checkpoint")
    p.add_argument("--compare", nargs="+", metavar="CKPT", help="Evaluate several checkpoints on the same data")
    p.add_argument("--data", required=True, help="Labelled CSV")
    p.add_argument("--schema", help="Optional YAML dataset schema")
    p.add_argument("--width", type=float, default=2.0, help="Interval width for interval MAE")
    p.add_argument("--diagnostics", action="store_true", help="Also write embedding/probability diagnostics")
    p.add_argument("--seed", type=int, default=0, help="Seed for sampled XAUC pairs")
    p.add_argument("--out", help="Output directory (default: <output_dir>/evaluate)")
    p.set_defaults(handler=cmd_evaluate, parser=p)
