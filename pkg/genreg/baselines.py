# genreg/baselines.py
# -*- coding: utf-8 -*-
"""Reference heads on the shared encoder: value regression and bucket-ordinal."""

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from genreg.autodiff import Tensor, bce_with_logits, relu, sigmoid
from genreg.errors import VocabularyError
from genreg.model import ModelParams

logger = logging.getLogger(__name__)

DEFAULT_BUCKETS = 20


@dataclass(frozen=True)
class BucketScheme:
    """Edges e_0 = 0 < e_1 < ... < e_K; bucket k spans (e_k, e_k+1]."""
    edges: tuple

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 2:
            raise VocabularyError("A bucket scheme needs at least two edges.")
        if any(a >= b for a, b in zip(edges, edges[1:])):
            raise VocabularyError(f"Bucket edges must be strictly increasing: {edges}")

    @property
    def num_buckets(self) -> int:
        return len(self.edges) - 1

    @property
    def lower_edges(self) -> np.ndarray:
        return np.asarray(self.edges[:-1])

    @property
    def spans(self) -> np.ndarray:
        return np.diff(np.asarray(self.edges))

    @property
    def max_value(self) -> float:
        return float(self.spans.sum())

    def labels(self, targets) -> np.ndarray:
        """[N, K] binary labels 1[y > e_k]."""
        y = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
        return (y > self.lower_edges[None, :]).astype(np.float64)

    def to_dict(self) -> Dict:
        return {"edges": list(self.edges)}

    @classmethod
    def from_dict(cls, data: Dict) -> "BucketScheme":
        return cls(tuple(data["edges"]))


def build_bucket_scheme(targets, num_buckets: int = DEFAULT_BUCKETS) -> BucketScheme:
    """Equal-frequency edges from training targets; duplicate quantiles collapse."""
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0 or y.max() <= 0:
        raise VocabularyError("Bucket edges need at least one positive target.")
    levels = np.arange(1, num_buckets) / num_buckets
    inner = np.quantile(y, levels) if num_buckets > 1 else np.array([])
    edges = np.unique(np.concatenate([[0.0], inner, [y.max()]]))
    edges = np.round(edges, 12)
    edges = np.unique(edges)
    if len(edges) - 1 < num_buckets:
        logger.info(f"Bucket scheme collapsed from {num_buckets} to {len(edges) - 1} buckets")
    return BucketScheme(tuple(edges))


def vr_head(h, params: ModelParams, clamp: bool = True) -> Tensor:
    """Linear value regression on h; training uses the raw output (`clamp=False`)."""
    h = h if isinstance(h, Tensor) else Tensor(h)
    out = h @ params["head.weight"] + params["head.bias"]
    out = out.reshape(out.shape[:-1])
    return relu(out) if clamp else out


def ordinal_logits(h, params: ModelParams) -> Tensor:
    h = h if isinstance(h, Tensor) else Tensor(h)
    return h @ params["head.weight"] + params["head.bias"]


def ordinal_head(h, params: ModelParams, scheme: BucketScheme) -> Tensor:
    """y_hat = sum_k sigmoid(logit_k) * span_k, always within [0, sum(spans)]."""
    probs = sigmoid(ordinal_logits(h, params))
    return (probs * scheme.spans).sum(axis=-1)


def ordinal_loss(h, params: ModelParams, scheme: BucketScheme, targets) -> Tensor:
    """Mean binary cross-entropy over buckets and samples."""
    return bce_with_logits(ordinal_logits(h, params), scheme.labels(targets)).mean()
