# genreg/vocab.py
# -*- coding: utf-8 -*-
"""Value vocabularies: ordered time-slot tokens whose sums approximate targets.

Token ids 0..2 are PAD/SOS/EOS (decode value 0). Value tokens occupy ids
3..V+2 in strictly decreasing value order, so neighbouring ids hold
neighbouring values.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from genreg.errors import ConvergenceError, DegenerateTargetsError, VocabularyError

logger = logging.getLogger(__name__)

PAD_ID = 0
SOS_ID = 1
EOS_ID = 2
NUM_SPECIAL = 3
SPECIAL_TOKENS = {"pad": PAD_ID, "sos": SOS_ID, "eos": EOS_ID}

FORMAT_VERSION = 1
STRATEGIES = ("dynamic", "binary", "manual")

# Absolute slack for comparing residuals against token values.
VALUE_SLACK = 1e-9


@dataclass(frozen=True)
class ValueVocabulary:
    """Immutable value vocabulary; safe to share between threads."""
    value_tokens: tuple
    strategy: str = "manual"
    meta: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.value_tokens)
        object.__setattr__(self, "value_tokens", values)
        if not values:
            raise VocabularyError("A vocabulary needs at least one value token.")
        if any(not math.isfinite(v) or v <= 0 for v in values):
            raise VocabularyError("Value tokens must be finite and positive.")
        if any(a <= b for a, b in zip(values, values[1:])):
            raise VocabularyError("Value tokens must be strictly decreasing and unique.")
        table = np.zeros(NUM_SPECIAL + len(values), dtype=np.float64)
        table[NUM_SPECIAL:] = values
        object.__setattr__(self, "_table", table)

    # --- Lookups ---

    @property
    def num_values(self) -> int:
        return len(self.value_tokens)

    @property
    def size(self) -> int:
        """Total ids including the special tokens."""
        return NUM_SPECIAL + len(self.value_tokens)

    @property
    def values(self) -> np.ndarray:
        """g(id) for every id; specials map to 0."""
        return self._table

    @property
    def first_value_id(self) -> int:
        return NUM_SPECIAL

    @property
    def last_value_id(self) -> int:
        return self.size - 1

    @property
    def max_value(self) -> float:
        return self.value_tokens[0]

    @property
    def min_value(self) -> float:
        return self.value_tokens[-1]

    def is_value_id(self, token_id: int) -> bool:
        return NUM_SPECIAL <= token_id < self.size

    def value_of(self, token_id: int) -> float:
        return float(self._table[token_id])

    def id_of(self, value: float) -> int:
        """Id of the token whose value equals `value` (within slack)."""
        for index, v in enumerate(self.value_tokens):
            if abs(v - value) <= VALUE_SLACK:
                return NUM_SPECIAL + index
        raise VocabularyError(f"No token with value {value}.")

    # --- Persistence ---

    def to_dict(self) -> Dict:
        meta = {k: self.meta[k] for k in sorted(self.meta)}
        return {
            "format_version": FORMAT_VERSION,
            "strategy": self.strategy,
            "value_tokens": list(self.value_tokens),
            "special": dict(SPECIAL_TOKENS),
            "meta": meta,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ValueVocabulary":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise VocabularyError(f"Unsupported vocabulary format_version: {version!r}")
        special = data.get("special", SPECIAL_TOKENS)
        if dict(special) != SPECIAL_TOKENS:
            raise VocabularyError(f"Unexpected special token ids: {special}")
        tokens = data.get("value_tokens")
        if not isinstance(tokens, list):
            raise VocabularyError("value_tokens must be a list.")
        return cls(tuple(tokens), strategy=data.get("strategy", "manual"), meta=data.get("meta", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
        logger.info(f"Saved {self.strategy} vocabulary with {self.num_values} value tokens to {path}")

    @classmethod
    def load(cls, path: str) -> "ValueVocabulary":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise VocabularyError(f"Vocabulary file '{path}' is not valid JSON: {e}") from e
        return cls.from_dict(data)


def fingerprint_targets(targets: Iterable[float]) -> str:
    """Order-independent sha256 of a target multiset."""
    arr = np.sort(np.asarray(list(targets), dtype=np.float64))
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]


def _round_to_resolution(value: float, resolution: float) -> float:
    return float(np.round(np.round(value / resolution) * resolution, 12))


def _greedy_residuals(
    y: np.ndarray, tokens: Sequence[float], eps: float, max_len: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Residuals and token counts left by largest-first decomposition over `tokens`.

    Mirrors the codec: copies are taken only while the residual is above
    eps * y, and at most `max_len` tokens per target.
    """
    residuals = y.copy()
    used = np.zeros(y.shape, dtype=np.int64)
    bound = eps * y
    for value in sorted(tokens, reverse=True):
        active = residuals > bound
        if max_len is not None:
            active &= used < max_len
        if not np.any(active):
            break
        r = residuals[active]
        fits = np.floor((r + VALUE_SLACK) / value)
        needed = np.ceil((r - bound[active]) / value)
        count = np.minimum(fits, needed)
        if max_len is not None:
            count = np.minimum(count, max_len - used[active])
        residuals[active] = np.maximum(r - count * value, 0.0)
        used[active] += count.astype(np.int64)
    return residuals, used


def _truncated_rows(residuals: np.ndarray, used: np.ndarray, y: np.ndarray, eps: float,
                    max_len: Optional[int]) -> np.ndarray:
    """Targets whose encoding hits max_len before reaching tolerance."""
    if max_len is None:
        return np.zeros(y.shape, dtype=bool)
    return (residuals > eps * y) & (used >= max_len)


def _max_relative(residuals: np.ndarray, y: np.ndarray, positive: np.ndarray) -> float:
    ratios = np.zeros_like(residuals)
    ratios[positive] = residuals[positive] / y[positive]
    return float(ratios.max())


def _not_converged(max_iterations: int, err: float, eps: float) -> ConvergenceError:
    return ConvergenceError(
        f"Vocabulary construction reached max_iterations={max_iterations} with err={err:.6g} "
        f"> eps={eps}. Heavy-tailed targets may need a larger max_iterations "
        f"(vocab.max_iterations) or a looser eps."
    )


# =============================================================================
# Constructors
# =============================================================================

def build_dynamic(
    targets: Sequence[float],
    q_start: float = 99.0,
    q_end: float = 50.0,
    alpha: float = 0.95,
    eps: float = 1e-3,
    resolution: float = 0.01,
    max_iterations: int = 128,
    max_len: Optional[int] = None,
) -> ValueVocabulary:
    """Dynamic-percentile vocabulary construction.

    Each iteration takes the q-percentile (linear interpolation, rounded to
    `resolution`) of the residuals that are still above their tolerance,
    subtracts it from every residual at least as large, and decays q toward
    q_end. Stops once every residual is within eps * y or the percentile
    collapses to zero.

    Tokens are not always produced in descending order, so the subtraction
    path can differ from the codec's largest-first decomposition. A repair
    pass keeps iterating on greedy residuals until the codec itself
    reconstructs every construction target within eps * y. With `max_len`
    the repair decomposes under the same token cap as the codec; targets that
    still need more tokens are logged and counted in `meta["truncated"]`.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise VocabularyError("Cannot build a vocabulary from an empty target set.")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise VocabularyError("Targets must be finite and nonnegative.")
    if not 0 < q_end <= q_start <= 100:
        raise VocabularyError(f"Need 0 < q_end <= q_start <= 100, got {q_end}, {q_start}.")
    if not 0 < alpha <= 1:
        raise VocabularyError(f"alpha must be in (0, 1], got {alpha}.")
    if eps <= 0 or resolution <= 0:
        raise VocabularyError("eps and resolution must be positive.")
    if np.all(y == 0):
        raise DegenerateTargetsError("degenerate targets: every target is zero.")

    residuals = y.copy()
    positive = y > 0
    tokens: List[float] = []
    q = float(q_start)
    err = math.inf
    iterations = 0

    while err > eps:
        if iterations >= max_iterations:
            raise _not_converged(max_iterations, err, eps)
        iterations += 1
        unresolved = residuals[positive & (residuals > eps * y)]
        if unresolved.size == 0:
            break
        o = _round_to_resolution(np.percentile(unresolved, q), resolution)
        if o <= 0:
            logger.warning(
                f"Percentile collapsed to zero at iteration {iterations} (err={err:.6g}); "
                f"consider a finer resolution than {resolution}."
            )
            break
        if o not in tokens:
            tokens.append(o)
        hit = residuals >= o - VALUE_SLACK
        residuals[hit] = np.maximum(residuals[hit] - o, 0.0)
        err = _max_relative(residuals, y, positive)
        q = max(q * alpha, q_end)

    if not tokens:
        raise DegenerateTargetsError("degenerate targets: no positive percentile found.")

    # Repair: greedy residuals are always below the smallest token, so each
    # new percentile is a fresh, smaller token.
    repairs = 0
    residuals, used = _greedy_residuals(y, tokens, eps, max_len)
    capped = _truncated_rows(residuals, used, y, eps, max_len)
    err = _max_relative(residuals, y, positive & ~capped)
    while err > eps:
        if iterations >= max_iterations:
            raise _not_converged(max_iterations, err, eps)
        iterations += 1
        unresolved = residuals[positive & ~capped & (residuals > eps * y)]
        o = _round_to_resolution(np.percentile(unresolved, q), resolution)
        if o <= 0 or o in tokens:
            o = _round_to_resolution(unresolved.min(), resolution)
        if o <= 0 or o in tokens:
            logger.warning(
                f"Greedy repair cannot add a token below {min(tokens):g} at resolution "
                f"{resolution}; err={err:.6g}."
            )
            break
        tokens.append(o)
        repairs += 1
        residuals, used = _greedy_residuals(y, tokens, eps, max_len)
        capped = _truncated_rows(residuals, used, y, eps, max_len)
        err = _max_relative(residuals, y, positive & ~capped)
        q = max(q * alpha, q_end)

    truncated = int(capped.sum())
    if truncated:
        logger.warning(
            f"{truncated} construction targets need more than max_len={max_len} tokens; "
            f"their encodings will be truncated."
        )
    err = _max_relative(residuals, y, positive)

    logger.info(
        f"Dynamic vocabulary: {len(tokens)} tokens after {iterations} iterations "
        f"({repairs} repairs), err={err:.3g}"
    )
    meta = {
        "q_start": q_start, "q_end": q_end, "alpha": alpha, "eps": eps,
        "resolution": resolution, "iterations": iterations, "repairs": repairs,
        "max_len": max_len, "truncated": truncated,
        "final_err": err, "source_fingerprint": fingerprint_targets(y),
    }
    return ValueVocabulary(tuple(sorted(tokens, reverse=True)), strategy="dynamic", meta=meta)


def build_binary(y_max: float, unit: float) -> ValueVocabulary:
    """unit, 2*unit, 4*unit, ... up to and including the first value above y_max."""
    if unit <= 0 or y_max < unit:
        raise VocabularyError(f"Binary vocabulary needs y_max >= unit > 0, got {y_max}, {unit}.")
    values = [float(unit)]
    while values[-1] <= y_max:
        values.append(values[-1] * 2.0)
    meta = {"unit": unit, "y_max": y_max}
    return ValueVocabulary(tuple(reversed(values)), strategy="binary", meta=meta)


def build_manual(values: Sequence[float]) -> ValueVocabulary:
    """Vocabulary from an explicit list of positive, unique values."""
    vals = [float(v) for v in values]
    if not vals:
        raise VocabularyError("Manual vocabulary needs at least one value.")
    if len(set(vals)) != len(vals):
        raise VocabularyError(f"Manual vocabulary values must be unique: {vals}")
    return ValueVocabulary(tuple(sorted(vals, reverse=True)), strategy="manual",
                           meta={"values": sorted(vals)})


def build_manual_scaled(
    y_max: float, base: Sequence[float] = (1.0, 3.0, 5.0), unit: float = 1.0
) -> ValueVocabulary:
    """Experience-driven design: base*unit, then base*10*unit, ... past y_max."""
    if unit <= 0 or y_max <= 0 or not base:
        raise VocabularyError("Scaled manual vocabulary needs positive y_max, unit and base.")
    values = set()
    scale = float(unit)
    while True:
        for b in base:
            values.add(float(np.round(b * scale, 12)))
        if max(values) > y_max:
            break
        scale *= 10.0
    vocab = build_manual(sorted(values))
    return ValueVocabulary(vocab.value_tokens, strategy="manual",
                           meta={"base": list(base), "unit": unit, "y_max": y_max})


# =============================================================================
# Frequency analysis
# =============================================================================

@dataclass
class TokenFrequency:
    """Usage counts of each value token over greedy encodings of a target set."""
    vocab: ValueVocabulary
    counts: np.ndarray

    def count_of(self, value: float) -> int:
        return int(self.counts[self.vocab.id_of(value) - NUM_SPECIAL])

    def top_k(self, k: int = 15) -> List[tuple]:
        """(value, count) pairs sorted by descending count, ties by value."""
        order = sorted(
            range(len(self.counts)),
            key=lambda i: (-int(self.counts[i]), -self.vocab.value_tokens[i]),
        )
        return [(self.vocab.value_tokens[i], int(self.counts[i])) for i in order[:k]]

    def balance_ratio(self) -> float:
        """max/median count over all value tokens; inf when the median is zero."""
        median = float(np.median(self.counts))
        if median == 0:
            return math.inf
        return float(self.counts.max()) / median

    def unused_fraction(self) -> float:
        return float(np.mean(self.counts == 0))


def token_frequency(
    targets: Sequence[float], vocab: ValueVocabulary, max_len: Optional[int] = None
) -> TokenFrequency:
    """Count value-token usage over the greedy encodings of `targets`."""
    from genreg import codec

    counts = np.zeros(vocab.num_values, dtype=np.int64)
    for y in targets:
        seq = codec.encode(float(y), vocab, max_len or codec.DEFAULT_MAX_LEN)
        for token_id in seq.ids:
            counts[token_id - NUM_SPECIAL] += 1
    return TokenFrequency(vocab=vocab, counts=counts)
