# genreg/inference.py
# -*- coding: utf-8 -*-
"""Greedy autoregressive decoding from features to a predicted scalar."""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from genreg.autodiff import Tensor, no_grad
from genreg.baselines import BucketScheme, ordinal_head, vr_head
from genreg.codec import is_non_increasing
from genreg.errors import ShapeError
from genreg.model import ModelParams, decoder_forward_embeddings, embed_tokens, encode_features
from genreg.training import embedding_mixup
from genreg.vocab import EOS_ID, PAD_ID, SOS_ID, ValueVocabulary

logger = logging.getLogger(__name__)

TERMINATED_EOS = "EOS"
TERMINATED_MAX_LEN = "T_max"


@dataclass
class Prediction:
    y_hat: float
    token_ids: List[int] = field(default_factory=list)
    terminated_by: str = TERMINATED_EOS

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass
class GenerationResult:
    predictions: List[Prediction]
    monotonicity_violations: int = 0
    step_probabilities: Optional[np.ndarray] = None

    @property
    def values(self) -> np.ndarray:
        return np.array([p.y_hat for p in self.predictions], dtype=np.float64)


def _generate(features: np.ndarray, params: ModelParams, vocab: ValueVocabulary, max_len: int,
              apply_mixup: bool, mixup_window: int, record: bool):
    n = len(features)
    embedding = params["embedding"]
    h = encode_features(Tensor(features, dtype=embedding.dtype), params)
    inputs = embed_tokens(np.full((n, 1), SOS_ID), params).data
    tokens = np.full((n, max_len), PAD_ID, dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    recorded = []

    for t in range(max_len):
        logits = decoder_forward_embeddings(h, Tensor(inputs, dtype=embedding.dtype), params).data
        step = logits[:, -1, :].copy()
        # Never emit PAD or SOS.
        step[:, PAD_ID] = -np.inf
        step[:, SOS_ID] = -np.inf
        chosen = np.argmax(step, axis=-1)
        if record:
            live = step[~done]
            shifted = np.exp(live - live.max(axis=-1, keepdims=True))
            recorded.append(shifted / shifted.sum(axis=-1, keepdims=True))

        done |= chosen == EOS_ID
        active = ~done
        tokens[active, t] = chosen[active]
        lengths[active] += 1
        if not np.any(active):
            break

        if apply_mixup:
            # The mask above only guards argmax; mixup weights use raw logits.
            nxt = embedding_mixup(logits[:, -1, :], embedding, chosen, mixup_window).data
        else:
            nxt = embedding.data[chosen]
        inputs = np.concatenate([inputs, nxt[:, None, :]], axis=1)

    probabilities = np.concatenate(recorded, axis=0) if recorded else None
    return tokens, lengths, done, probabilities


def predict_batch(
    features,
    params: ModelParams,
    vocab: ValueVocabulary,
    max_len: Optional[int] = None,
    apply_mixup: bool = True,
    mixup_window: int = 2,
    batch_size: int = 512,
    record_probabilities: bool = False,
) -> GenerationResult:
    """Order-preserving greedy decoding over the rows of `features`."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    max_len = max_len or params.config.max_len
    predictions: List[Prediction] = []
    violations = 0
    probabilities = []
    started = time.perf_counter()

    with no_grad():
        for start in range(0, len(features), batch_size):
            chunk = features[start:start + batch_size]
            tokens, lengths, done, probs = _generate(
                chunk, params, vocab, max_len, apply_mixup, mixup_window, record_probabilities
            )
            for row in range(len(chunk)):
                ids = tokens[row, :lengths[row]].tolist()
                if not is_non_increasing(ids, vocab):
                    violations += 1
                predictions.append(Prediction(
                    y_hat=float(vocab.values[ids].sum()) if ids else 0.0,
                    token_ids=ids,
                    terminated_by=TERMINATED_EOS if done[row] else TERMINATED_MAX_LEN,
                ))
            if probs is not None:
                probabilities.append(probs)

    elapsed = time.perf_counter() - started
    if predictions:
        logger.info(
            f"Generated {len(predictions)} predictions in {elapsed:.2f}s "
            f"({len(predictions) / max(elapsed, 1e-9):.1f}/s)"
        )
    if violations:
        logger.warning(f"{violations}/{len(predictions)} generated sequences are not non-increasing")
    return GenerationResult(
        predictions=predictions,
        monotonicity_violations=violations,
        step_probabilities=np.concatenate(probabilities, axis=0) if probabilities else None,
    )


def predict(x, params: ModelParams, vocab: ValueVocabulary, max_len: Optional[int] = None,
            apply_mixup: bool = True, mixup_window: int = 2) -> Prediction:
    """Greedy decode for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"predict expects one feature vector, got shape {x.shape}.")
    return predict_batch(x[None, :], params, vocab, max_len, apply_mixup, mixup_window).predictions[0]


def predict_values(
    features,
    params: ModelParams,
    vocab: Optional[ValueVocabulary] = None,
    scheme: Optional[BucketScheme] = None,
    apply_mixup: bool = True,
    mixup_window: int = 2,
) -> np.ndarray:
    """Point predictions for any head."""
    head = params.config.head
    if head == "gr":
        return predict_batch(features, params, vocab, apply_mixup=apply_mixup,
                             mixup_window=mixup_window).values
    with no_grad():
        h = encode_features(np.asarray(features, dtype=np.float64), params)
        if head == "vr":
            return np.asarray(vr_head(h, params).data, dtype=np.float64)
        return np.asarray(ordinal_head(h, params, scheme).data, dtype=np.float64)
