# genreg/checkpoint.py
# -*- coding: utf-8 -*-
"""Versioned binary checkpoints.

Layout (little-endian):
    b"GRCKPT1"
    uint32 meta length, UTF-8 JSON meta (model config, vocabulary, scaler, ...)
    uint32 parameter count, then per parameter:
        uint16 name length, name, uint8 ndim, uint32 dims..., float32 values (row-major)
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from genreg.baselines import BucketScheme
from genreg.data import FeatureScaler
from genreg.errors import CheckpointError
from genreg.model import ModelConfig, ModelParams, init_params, param_shapes
from genreg.vocab import ValueVocabulary

logger = logging.getLogger(__name__)

MAGIC = b"GRCKPT1"


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: Optional[ValueVocabulary] = None
    scaler: Optional[FeatureScaler] = None
    bucket_scheme: Optional[BucketScheme] = None
    train_config: Dict = field(default_factory=dict)
    schedule: Dict = field(default_factory=dict)
    manifest_id: Optional[str] = None

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    def transform(self, features: np.ndarray) -> np.ndarray:
        return self.scaler.transform(features) if self.scaler is not None else np.asarray(features)


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    meta = {
        "model_config": checkpoint.config.to_dict(),
        "vocab": checkpoint.vocab.to_dict() if checkpoint.vocab else None,
        "scaler": checkpoint.scaler.to_dict() if checkpoint.scaler else None,
        "bucket_scheme": checkpoint.bucket_scheme.to_dict() if checkpoint.bucket_scheme else None,
        "train_config": checkpoint.train_config,
        "schedule": checkpoint.schedule,
        "manifest_id": checkpoint.manifest_id,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(checkpoint.params.tensors)))
        for name, tensor in checkpoint.params.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", tensor.ndim))
            f.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            f.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    logger.info(f"Saved checkpoint with {checkpoint.params.num_parameters()} parameters to {path}")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data, self.pos, self.path = data, 0, path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise CheckpointError(f"Checkpoint '{self.path}' is truncated.")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str) -> Checkpoint:
    """Read a checkpoint and validate every parameter shape against its config."""
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"'{path}' is not a checkpoint (bad magic).")
    (meta_len,) = reader.unpack("<I")
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Checkpoint '{path}' has unreadable metadata: {e}") from e

    config = ModelConfig.from_dict(meta.get("model_config") or {})
    expected = param_shapes(config)
    (count,) = reader.unpack("<I")
    state = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        if name not in expected:
            raise CheckpointError(f"Checkpoint parameter '{name}' does not belong to this model config.")
        if tuple(shape) != expected[name]:
            raise CheckpointError(
                f"Checkpoint parameter '{name}' has shape {tuple(shape)}, config expects {expected[name]}."
            )
        state[name] = values.astype(np.float64)

    params = init_params(config)
    params.load_state_dict(state)

    vocab = ValueVocabulary.from_dict(meta["vocab"]) if meta.get("vocab") else None
    if config.head == "gr" and (vocab is None or vocab.size != config.vocab_size):
        raise CheckpointError(f"Checkpoint '{path}' vocabulary does not match vocab_size {config.vocab_size}.")
    scheme = BucketScheme.from_dict(meta["bucket_scheme"]) if meta.get("bucket_scheme") else None
    scaler = FeatureScaler.from_dict(meta["scaler"]) if meta.get("scaler") else None
    logger.debug(f"Loaded {config.head} checkpoint from {path}")
    return Checkpoint(
        params=params,
        vocab=vocab,
        scaler=scaler,
        bucket_scheme=scheme,
        train_config=meta.get("train_config") or {},
        schedule=meta.get("schedule") or {},
        manifest_id=meta.get("manifest_id"),
    )
