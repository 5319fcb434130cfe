# utils/pipeline.py
# -*- coding: utf-8 -*-
"""Glue shared by several commands: data loading, splits, vocabulary and training runs."""

import copy
import logging
import os
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from genreg.checkpoint import Checkpoint, save_checkpoint
from genreg.codec import is_non_increasing
from genreg.data import Dataset, DatasetSchema, load_csv, split, synth_longtail
from genreg.errors import ConfigError
from genreg.inference import TERMINATED_EOS, predict_batch, predict_values
from genreg.metrics import EvalReport, build_eval_report
from genreg.training import TrainResult, apply_variant, train
from genreg.vocab import (
    ValueVocabulary,
    build_binary,
    build_dynamic,
    build_manual,
    build_manual_scaled,
)
from utils.reporting import training_progress_logger

logger = logging.getLogger(__name__)


# =============================================================================
# Data
# =============================================================================

def load_dataset(settings, path: Optional[str], schema_path: Optional[str] = None,
                 require_target: bool = True) -> Dataset:
    """CSV at `path`, or the configured synthetic generator when no path is given."""
    if path:
        schema = DatasetSchema.load(schema_path) if schema_path else None
        return load_csv(path, schema, require_target=require_target)
    data = settings.data
    logger.info(f"No --data given; generating {data.n} synthetic rows (d={data.d}, seed={data.seed}).")
    return synth_longtail(data.n, data.d, data.seed, data.synth_params())


def split_dataset(dataset: Dataset, settings, seed: int) -> Tuple[Dataset, Optional[Dataset], Dataset]:
    """train / validation / test. `val_ratio` is a fraction of the training part."""
    data = settings.data
    if not 0 < data.test_ratio < 1:
        raise ConfigError(f"data.test_ratio must be in (0, 1), got {data.test_ratio}.")
    train_full, test = split(dataset, 1.0 - data.test_ratio, seed)
    if data.val_ratio <= 0:
        return train_full, None, test
    if data.val_ratio >= 1:
        raise ConfigError(f"data.val_ratio must be below 1, got {data.val_ratio}.")
    train_part, val = split(train_full, 1.0 - data.val_ratio, seed + 1)
    return train_part, val, test


# =============================================================================
# Vocabulary
# =============================================================================

def build_vocabulary(strategy: str, targets: Sequence[float], vocab_settings,
                     values: Optional[Sequence[float]] = None) -> ValueVocabulary:
    """One of dynamic | binary | manual from the vocab config section.

    Manual uses `values` (or vocab.values); without either it falls back to the
    scaled 1-3-5 design.
    """
    targets = np.asarray(targets, dtype=np.float64)
    y_max = vocab_settings.y_max or (float(targets.max()) if targets.size else 0.0)
    if strategy == "dynamic":
        return build_dynamic(
            targets, q_start=vocab_settings.q_start, q_end=vocab_settings.q_end,
            alpha=vocab_settings.alpha, eps=vocab_settings.eps,
            resolution=vocab_settings.resolution, max_iterations=vocab_settings.max_iterations,
            max_len=vocab_settings.max_len,
        )
    if strategy == "binary":
        return build_binary(max(y_max, vocab_settings.unit), vocab_settings.unit)
    if strategy == "manual":
        chosen = list(values or vocab_settings.values)
        if chosen:
            return build_manual(chosen)
        return build_manual_scaled(max(y_max, vocab_settings.unit), vocab_settings.base, vocab_settings.unit)
    raise ConfigError(f"Unknown vocabulary strategy '{strategy}'. Choose from dynamic, binary, manual.")


# =============================================================================
# Training and evaluation
# =============================================================================

@dataclass
class RunOutcome:
    result: TrainResult
    checkpoint: Checkpoint
    test_set: Dataset


def run_training(settings, train_set: Dataset, val_set: Optional[Dataset], test_set: Dataset,
                 vocab: Optional[ValueVocabulary], out_dir: Optional[str] = None,
                 manifest_id: Optional[str] = None, label: str = "train") -> RunOutcome:
    """Train one model from the settings bundle and optionally write its checkpoint."""
    model_config = replace(settings.model, max_len=settings.vocab.max_len)
    metrics_path = os.path.join(out_dir, "metrics.jsonl") if out_dir else None
    result = train(
        train_set, val_set, vocab if model_config.head == "gr" else None,
        model_config, settings.train, settings.schedule,
        metrics_path=metrics_path, progress=training_progress_logger(label),
    )
    checkpoint = Checkpoint(
        params=result.params,
        vocab=vocab if model_config.head == "gr" else None,
        scaler=result.scaler,
        bucket_scheme=result.bucket_scheme,
        train_config=settings.train.to_dict(),
        schedule=settings.schedule.to_dict(),
        manifest_id=manifest_id,
    )
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "model.ckpt"), checkpoint)
    return RunOutcome(result=result, checkpoint=checkpoint, test_set=test_set)


@dataclass
class Evaluation:
    report: EvalReport
    preds: np.ndarray
    generation: Optional[object] = None


def evaluate_checkpoint(checkpoint: Checkpoint, dataset: Dataset, apply_mixup: Optional[bool] = None,
                        mixup_window: Optional[int] = None, record_probabilities: bool = False,
                        interval_width: float = 2.0, seed: int = 0) -> Evaluation:
    """Predict `dataset` with a checkpoint and build its report."""
    features = checkpoint.transform(dataset.features)
    train_config = checkpoint.train_config
    if apply_mixup is None:
        apply_mixup = bool(train_config.get("mixup_enabled", True))
    if mixup_window is None:
        mixup_window = int(train_config.get("mixup_window", 2))

    if checkpoint.config.head != "gr":
        preds = predict_values(features, checkpoint.params, scheme=checkpoint.bucket_scheme)
        return Evaluation(build_eval_report(preds, dataset.targets, width=interval_width, seed=seed), preds)

    generation = predict_batch(
        features, checkpoint.params, checkpoint.vocab,
        apply_mixup=apply_mixup, mixup_window=mixup_window,
        record_probabilities=record_probabilities,
    )
    preds = generation.values
    lengths = [len(p.token_ids) for p in generation.predictions]
    eos = [p.terminated_by == TERMINATED_EOS for p in generation.predictions]
    violations = [not is_non_increasing(p.token_ids, checkpoint.vocab) for p in generation.predictions]
    report = build_eval_report(preds, dataset.targets, seq_lengths=lengths, terminated_by_eos=eos,
                               violations=violations, width=interval_width, seed=seed)
    return Evaluation(report, preds, generation)


# =============================================================================
# Ablation grids
# =============================================================================

GRIDS = {
    "clem": ["full", "no_clem", "em_tf", "cl_no_em", "linear", "exponential", "fixed0.5", "fixed0"],
    "heads": ["gr", "vr", "ordinal"],
    "vocab": ["dynamic", "binary", "manual"],
}


def _configure_row(settings, grid: str, row: str, seed: int):
    """Copy of `settings` set up for one grid row and training seed."""
    configured = copy.deepcopy(settings)
    configured.train.seed = seed
    if grid == "clem":
        configured.model.head = "gr"
        configured.schedule, configured.train = apply_variant(row, configured.schedule, configured.train)
    elif grid == "heads":
        configured.model.head = row
    elif grid == "vocab":
        configured.model.head = "gr"
        configured.vocab.strategy = row
    else:
        raise ConfigError(f"Unknown ablation grid '{grid}'. Choose from {', '.join(GRIDS)}.")
    return configured


def run_ablation(settings, dataset: Dataset, grid: str, seeds: Sequence[int],
                 rows: Optional[Sequence[str]] = None) -> List[Dict]:
    """Train and test every row of a grid once per seed; one result dict per run."""
    if grid not in GRIDS:
        raise ConfigError(f"Unknown ablation grid '{grid}'. Choose from {', '.join(GRIDS)}.")
    train_set, val_set, test_set = split_dataset(dataset, settings, settings.data.seed)
    zero_mask = test_set.targets == 0
    vocab_cache: Dict[str, ValueVocabulary] = {}
    results: List[Dict] = []

    for row in rows or GRIDS[grid]:
        for seed in seeds:
            configured = _configure_row(settings, grid, row, seed)
            vocab = None
            if configured.model.head == "gr":
                strategy = configured.vocab.strategy
                if strategy not in vocab_cache:
                    vocab_cache[strategy] = build_vocabulary(strategy, train_set.targets, configured.vocab)
                vocab = vocab_cache[strategy]

            outcome = run_training(configured, train_set, val_set, test_set, vocab, label=f"{row}/seed{seed}")
            evaluation = evaluate_checkpoint(outcome.checkpoint, test_set, seed=seed)
            report = evaluation.report
            results.append({
                "grid": grid,
                "variant": row,
                "seed": seed,
                "mae": report.mae,
                "xauc": report.xauc,
                "spearman": report.spearman,
                "mean_pred_at_zero": float(evaluation.preds[zero_mask].mean()) if zero_mask.any() else None,
                "best_step": outcome.result.best_step,
            })
            logger.info(f"Ablation {grid}:{row} seed {seed}: MAE {report.mae:.4f}, XAUC {report.xauc:.4f}")
    return results


def summarize_ablation(results: Sequence[Dict]) -> List[Dict]:
    """Mean of each metric over seeds, one row per variant in first-seen order."""
    summary: List[Dict] = []
    metrics = ("mae", "xauc", "spearman", "mean_pred_at_zero")
    for variant in dict.fromkeys(r["variant"] for r in results):
        runs = [r for r in results if r["variant"] == variant]
        row = {"grid": runs[0]["grid"], "variant": variant, "seeds": len(runs)}
        for metric in metrics:
            values = [r[metric] for r in runs if r[metric] is not None and np.isfinite(r[metric])]
            row[metric] = float(np.mean(values)) if values else None
        summary.append(row)
    return summary
