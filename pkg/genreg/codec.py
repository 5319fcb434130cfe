# genreg/codec.py
# -*- coding: utf-8 -*-
"""Greedy label encoding and additive label decoding."""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence

import numpy as np

from genreg.errors import CodecError
from genreg.vocab import NUM_SPECIAL, VALUE_SLACK, ValueVocabulary

logger = logging.getLogger(__name__)

DEFAULT_MAX_LEN = 32
DEFAULT_TOLERANCE = 1e-3


@dataclass
class TokenSeq:
    """Value-token ids of one encoded target; SOS/EOS framing is added by the model."""
    ids: List[int] = field(default_factory=list)
    max_len: int = DEFAULT_MAX_LEN
    encoding_error: float = 0.0
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def encode(
    y: float,
    vocab: ValueVocabulary,
    max_len: int = DEFAULT_MAX_LEN,
    tolerance: float = DEFAULT_TOLERANCE,
) -> TokenSeq:
    """Greedy decomposition of `y`, largest fitting token first.

    Stops when the residual is within `tolerance * y`, when no token fits the
    residual, or at `max_len` tokens. The leftover residual is recorded in
    `encoding_error`; it is reported, never raised.
    """
    if not np.isfinite(y) or y < 0:
        raise CodecError(f"Cannot encode target {y!r}: targets must be finite and nonnegative.")

    # Ascending view so searchsorted finds the largest value <= residual.
    ascending = np.asarray(vocab.value_tokens[::-1])
    last_id = vocab.last_value_id
    ids: List[int] = []
    residual = float(y)
    bound = tolerance * y
    truncated = False

    while residual > bound:
        if len(ids) >= max_len:
            truncated = True
            break
        pos = int(np.searchsorted(ascending, residual + VALUE_SLACK, side="right")) - 1
        if pos < 0:
            break
        ids.append(last_id - pos)
        residual = max(residual - float(ascending[pos]), 0.0)

    if truncated:
        logger.debug(f"Encoding of y={y} truncated at {max_len} tokens, residual {residual:.6g}")
    return TokenSeq(ids=ids, max_len=max_len, encoding_error=residual, truncated=truncated)


def decode(ids: Iterable[int], vocab: ValueVocabulary) -> float:
    """Sum of token values; special tokens add nothing."""
    total = 0.0
    for token_id in ids:
        token_id = int(token_id)
        if token_id < 0 or token_id >= vocab.size:
            raise CodecError(f"Unknown token id {token_id} for a vocabulary of size {vocab.size}.")
        total += vocab.values[token_id]
    return float(total)


def decode_batch(id_matrix: np.ndarray, vocab: ValueVocabulary) -> np.ndarray:
    """Row sums of token values for a [N, T] id matrix (PAD-filled rows allowed)."""
    id_matrix = np.asarray(id_matrix, dtype=np.int64)
    if id_matrix.size and (id_matrix.min() < 0 or id_matrix.max() >= vocab.size):
        raise CodecError(f"Token ids out of range for a vocabulary of size {vocab.size}.")
    return vocab.values[id_matrix].sum(axis=-1)


def is_non_increasing(ids: Sequence[int], vocab: ValueVocabulary) -> bool:
    values = [vocab.values[i] for i in ids if i >= NUM_SPECIAL]
    return all(a >= b for a, b in zip(values, values[1:]))


@dataclass
class RoundTripReport:
    count: int
    max_rel_err: float
    pct_within_tolerance: float
    mean_seq_len: float
    max_seq_len: int
    truncated: int
    out_of_tolerance: int
    tolerance: float = DEFAULT_TOLERANCE

    def as_rows(self) -> List[tuple]:
        return [
            ("samples", f"{self.count}"),
            ("max_rel_err", f"{self.max_rel_err:.6g}"),
            ("pct_within_tolerance", f"{self.pct_within_tolerance:.2f}"),
            ("mean_seq_len", f"{self.mean_seq_len:.3f}"),
            ("max_seq_len", f"{self.max_seq_len}"),
            ("truncated", f"{self.truncated}"),
            ("out_of_tolerance", f"{self.out_of_tolerance}"),
        ]


def validate_roundtrip(
    targets: Sequence[float],
    vocab: ValueVocabulary,
    max_len: int = DEFAULT_MAX_LEN,
    tolerance: float = DEFAULT_TOLERANCE,
) -> RoundTripReport:
    """Encode then decode every target and aggregate the relative errors."""
    y = np.asarray(targets, dtype=np.float64)
    rel_errors = np.zeros(len(y))
    lengths = np.zeros(len(y), dtype=np.int64)
    within = 0
    truncated = 0

    for i, target in enumerate(y):
        seq = encode(float(target), vocab, max_len, tolerance)
        reconstructed = decode(seq.ids, vocab)
        delta = abs(reconstructed - target)
        rel_errors[i] = delta / target if target > 0 else 0.0
        lengths[i] = len(seq)
        truncated += int(seq.truncated)
        if delta <= tolerance * target + VALUE_SLACK:
            within += 1

    count = len(y)
    out_of_tolerance = count - within
    if out_of_tolerance:
        logger.warning(
            f"{out_of_tolerance}/{count} targets fall outside the {tolerance:g} relative tolerance."
        )
    return RoundTripReport(
        count=count,
        max_rel_err=float(rel_errors.max()) if count else 0.0,
        pct_within_tolerance=100.0 * within / count if count else 100.0,
        mean_seq_len=float(lengths.mean()) if count else 0.0,
        max_seq_len=int(lengths.max()) if count else 0,
        truncated=truncated,
        out_of_tolerance=out_of_tolerance,
        tolerance=tolerance,
    )
