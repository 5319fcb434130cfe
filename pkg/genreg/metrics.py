# genreg/metrics.py
# -*- coding: utf-8 -*-
"""Evaluation metrics and diagnostics for watch-time style predictions."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from genreg.errors import MetricError
from genreg.vocab import NUM_SPECIAL, ValueVocabulary

logger = logging.getLogger(__name__)

EXHAUSTIVE_PAIR_LIMIT = 2000
DEFAULT_SAMPLED_PAIRS = 500_000


def _as_pair(preds, labels):
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(preds) != len(labels):
        raise MetricError(f"preds ({len(preds)}) and labels ({len(labels)}) differ in length.")
    return preds, labels


def mae(preds, labels) -> float:
    preds, labels = _as_pair(preds, labels)
    if len(preds) == 0:
        raise MetricError("mae of an empty set is undefined.")
    return float(np.mean(np.abs(preds - labels)))


def xauc(
    preds,
    labels,
    num_pairs: Optional[int] = None,
    seed: int = 0,
    exhaustive_limit: int = EXHAUSTIVE_PAIR_LIMIT,
) -> float:
    """Fraction of pairs whose predicted order agrees with the label order.

    All pairs are scored when N <= exhaustive_limit; otherwise `num_pairs`
    pairs are drawn uniformly with `seed`. Prediction ties score 0.5 and
    label ties are skipped.
    """
    preds, labels = _as_pair(preds, labels)
    n = len(preds)
    if n < 2:
        raise MetricError(f"xauc needs at least 2 samples, got {n}.")

    if n <= exhaustive_limit:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        count = num_pairs or DEFAULT_SAMPLED_PAIRS
        i = rng.integers(0, n, size=count)
        j = rng.integers(0, n, size=count)
        distinct = i != j
        i, j = i[distinct], j[distinct]

    label_order = np.sign(labels[i] - labels[j])
    pred_order = np.sign(preds[i] - preds[j])
    valid = label_order != 0
    if not np.any(valid):
        raise MetricError("degenerate labels: every sampled label pair is tied.")
    scores = np.where(pred_order == 0, 0.5, (pred_order == label_order).astype(np.float64))
    return float(scores[valid].mean())


def _average_ranks(values: np.ndarray) -> np.ndarray:
    series = pd.Series(values)
    return series.rank(method="average").to_numpy(dtype=np.float64)


def spearman(preds, labels) -> float:
    """Rank correlation with average ranks for ties; nan when a side is constant."""
    preds, labels = _as_pair(preds, labels)
    if len(preds) < 2:
        raise MetricError("spearman needs at least 2 samples.")
    rp, rl = _average_ranks(preds), _average_ranks(labels)
    rp -= rp.mean()
    rl -= rl.mean()
    denom = math.sqrt(float(np.sum(rp * rp)) * float(np.sum(rl * rl)))
    if denom == 0:
        return math.nan
    return float(np.sum(rp * rl) / denom)


@dataclass
class IntervalRow:
    lower: float
    upper: Optional[float]
    count: int
    mae: Optional[float]

    @property
    def label(self) -> str:
        if self.upper is None:
            return f">={self.lower:g}"
        return f"[{self.lower:g},{self.upper:g})"


# Closed 2 s segments up to 10 s, then one open tail
DEFAULT_INTERVAL_WIDTH = 2.0
DEFAULT_MAX_INTERVALS = 6


def interval_mae(preds, labels, width: float = DEFAULT_INTERVAL_WIDTH,
                 max_intervals: Optional[int] = DEFAULT_MAX_INTERVALS) -> List[IntervalRow]:
    """MAE per ground-truth interval [k*width, (k+1)*width).

    The last of `max_intervals` rows is open-ended, so the defaults give
    [0,2) .. [8,10) plus >=10. Empty intervals keep
    `mae=None` rather than 0.
    """
    if width <= 0:
        raise MetricError(f"interval width must be positive, got {width}.")
    preds, labels = _as_pair(preds, labels)
    errors = np.abs(preds - labels)
    k = np.floor(labels / width).astype(np.int64)
    if max_intervals is None:
        num = int(k.max()) + 1 if len(k) else 0
    else:
        num = max_intervals
        k = np.minimum(k, num - 1)

    rows = []
    for index in range(num):
        selected = k == index
        open_ended = max_intervals is not None and index == num - 1
        count = int(selected.sum())
        rows.append(IntervalRow(
            lower=index * width,
            upper=None if open_ended else (index + 1) * width,
            count=count,
            mae=float(errors[selected].mean()) if count else None,
        ))
    return rows


def distribution_stats(preds, labels) -> Dict[str, float]:
    """Population mean/variance (ddof=0) of both series."""
    preds, labels = _as_pair(preds, labels)
    return {
        "pred_mean": float(np.mean(preds)),
        "pred_var": float(np.var(preds)),
        "label_mean": float(np.mean(labels)),
        "label_var": float(np.var(labels)),
    }


# =============================================================================
# Embedding and probability diagnostics
# =============================================================================

def aggregated_value_embedding(ids: Sequence[int], y: float, vocab: ValueVocabulary,
                               embedding: np.ndarray) -> np.ndarray:
    """e = sum_t (g(s_t) / y) * E[s_t] for an encoded target."""
    if y <= 0:
        raise MetricError("aggregated value embedding needs y > 0.")
    ids = [int(i) for i in ids]
    if not ids:
        raise MetricError("aggregated value embedding needs a non-empty sequence.")
    embedding = np.asarray(embedding)
    weights = vocab.values[ids] / y
    return weights @ embedding[ids]


def neighbor_prob_difference(step_outputs: np.ndarray, vocab: ValueVocabulary,
                             from_logits: bool = False) -> np.ndarray:
    """Mean |P(w_j) - P(w_j+1)| per value token over recorded decoding steps.

    `step_outputs` is [steps, vocab_size] (or a bare [num_values] distribution).
    The last value token is compared with its left neighbour since it has no
    right one.
    """
    out = np.asarray(step_outputs, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if from_logits:
        shifted = out - out.max(axis=-1, keepdims=True)
        out = np.exp(shifted) / np.exp(shifted).sum(axis=-1, keepdims=True)
    if out.shape[-1] == vocab.size:
        out = out[:, NUM_SPECIAL:]
    if out.shape[-1] != vocab.num_values:
        raise MetricError(f"Expected {vocab.num_values} value-token columns, got {out.shape[-1]}.")
    if vocab.num_values < 2:
        return np.zeros(vocab.num_values)
    diffs = np.abs(np.diff(out, axis=-1))
    per_token = np.concatenate([diffs, diffs[:, -1:]], axis=-1)
    return per_token.mean(axis=0)


# =============================================================================
# Report
# =============================================================================

@dataclass
class EvalReport:
    count: int
    mae: float
    xauc: float
    spearman: float
    intervals: List[IntervalRow]
    distribution: Dict[str, float]
    monotonicity_violation_rate: float = 0.0
    eos_rate: float = 0.0
    mean_seq_len: float = 0.0
    max_seq_len: int = 0
    extra: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> Dict:
        data = asdict(self)
        data.pop("intervals")
        data["intervals"] = [
            {"interval": row.label, "count": row.count, "mae": row.mae} for row in self.intervals
        ]
        return data

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.summary()), indent=2, sort_keys=True) + "\n"

    def intervals_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"interval": r.label, "lower": r.lower, "upper": r.upper, "count": r.count, "mae": r.mae}
             for r in self.intervals]
        )


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def build_eval_report(preds, labels, seq_lengths=None, terminated_by_eos=None,
                      violations=None, width: float = DEFAULT_INTERVAL_WIDTH,
                      max_intervals: Optional[int] = DEFAULT_MAX_INTERVALS, seed: int = 0) -> EvalReport:
    preds, labels = _as_pair(preds, labels)
    try:
        xauc_value = xauc(preds, labels, seed=seed)
    except MetricError as e:
        logger.warning(f"XAUC undefined for this evaluation set: {e}")
        xauc_value = math.nan
    lengths = np.asarray(seq_lengths if seq_lengths is not None else np.zeros(len(preds)))
    return EvalReport(
        count=len(preds),
        mae=mae(preds, labels),
        xauc=xauc_value,
        spearman=spearman(preds, labels) if len(preds) >= 2 else math.nan,
        intervals=interval_mae(preds, labels, width, max_intervals=max_intervals),
        distribution=distribution_stats(preds, labels),
        monotonicity_violation_rate=float(np.mean(violations)) if violations is not None else 0.0,
        eos_rate=float(np.mean(terminated_by_eos)) if terminated_by_eos is not None else 0.0,
        mean_seq_len=float(lengths.mean()) if len(lengths) else 0.0,
        max_seq_len=int(lengths.max()) if len(lengths) else 0,
    )
