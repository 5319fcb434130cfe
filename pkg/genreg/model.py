# genreg/model.py
# -*- coding: utf-8 -*-
"""FFN feature encoder and causal Transformer decoder.

The encoder maps a dense feature vector x to one hidden vector h. The decoder
is a post-LN Transformer: masked self-attention over the token prefix,
cross-attention to h (a one-element memory), then a position-wise FFN. Learned
positional embeddings cover decoder positions 0..max_len+1.

Batched shapes: h [B, D], input ids [B, T], logits [B, T, V]. Unbatched
inputs (h [D], ids [T]) return logits [T, V].
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from genreg.autodiff import (
    MASK_VALUE,
    Tensor,
    get_default_dtype,
    layer_norm,
    relu,
    softmax,
    take_rows,
)
from genreg.config import ConfigSection
from genreg.errors import CheckpointError, CodecError, ConfigError, ShapeError
from genreg.vocab import EOS_ID, PAD_ID, SOS_ID

logger = logging.getLogger(__name__)

HEADS = ("gr", "vr", "ordinal")


@dataclass
class ModelConfig(ConfigSection):
    """Network dimensions; every field is exposed through the config file."""
    feature_dim: int = 8
    vocab_size: int = 3
    hidden_dim: int = 32
    encoder_layers: int = 3
    decoder_blocks: int = 2
    attention_heads: int = 2
    ffn_mult: int = 4
    max_len: int = 32
    num_buckets: int = 20
    head: str = "gr"
    seed: int = 0

    def validate(self) -> None:
        for name in ("feature_dim", "vocab_size", "hidden_dim", "encoder_layers",
                     "attention_heads", "ffn_mult", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}.")
        if self.decoder_blocks < 0:
            raise ConfigError(f"model.decoder_blocks must be >= 0, got {self.decoder_blocks}.")
        if self.hidden_dim % self.attention_heads:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} is not divisible by attention_heads "
                f"{self.attention_heads}."
            )
        if self.head not in HEADS:
            raise ConfigError(f"Unknown head '{self.head}'. Choose from {', '.join(HEADS)}.")
        if self.head == "ordinal" and self.num_buckets < 1:
            raise ConfigError("ordinal head needs num_buckets >= 1.")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.attention_heads

    @property
    def ffn_dim(self) -> int:
        return self.hidden_dim * self.ffn_mult


class ModelParams:
    """Ordered, named parameter tensors of one model."""

    def __init__(self, config: ModelConfig, tensors: "OrderedDict[str, Tensor]"):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of every parameter array, for snapshots and checkpoints."""
        return OrderedDict((name, t.data.copy()) for name, t in self.tensors.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.tensors) - set(state)
        if missing:
            raise CheckpointError(f"State is missing parameters: {sorted(missing)}")
        for name, tensor in self.tensors.items():
            array = np.asarray(state[name])
            if array.shape != tensor.shape:
                raise CheckpointError(
                    f"Parameter '{name}' has shape {array.shape}, expected {tensor.shape}."
                )
            tensor.data = array.astype(tensor.dtype, copy=True)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


# =============================================================================
# Shapes and initialization
# =============================================================================

def param_shapes(config: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Name -> shape for every parameter, in initialization order."""
    config.validate()
    D, F, V = config.hidden_dim, config.feature_dim, config.vocab_size
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()

    for layer in range(config.encoder_layers):
        fan_in = F if layer == 0 else D
        shapes[f"encoder.{layer}.weight"] = (fan_in, D)
        shapes[f"encoder.{layer}.bias"] = (D,)

    if config.head == "vr":
        shapes["head.weight"] = (D, 1)
        shapes["head.bias"] = (1,)
        return shapes
    if config.head == "ordinal":
        shapes["head.weight"] = (D, config.num_buckets)
        shapes["head.bias"] = (config.num_buckets,)
        return shapes

    shapes["embedding"] = (V, D)
    shapes["positional"] = (config.max_len + 2, D)
    for b in range(config.decoder_blocks):
        for attn in ("self_attn", "cross_attn"):
            for proj in ("q", "k", "v", "o"):
                shapes[f"blocks.{b}.{attn}.w{proj}"] = (D, D)
                shapes[f"blocks.{b}.{attn}.b{proj}"] = (D,)
        shapes[f"blocks.{b}.ffn.w1"] = (D, config.ffn_dim)
        shapes[f"blocks.{b}.ffn.b1"] = (config.ffn_dim,)
        shapes[f"blocks.{b}.ffn.w2"] = (config.ffn_dim, D)
        shapes[f"blocks.{b}.ffn.b2"] = (D,)
        for ln in ("ln1", "ln2", "ln3"):
            shapes[f"blocks.{b}.{ln}.gamma"] = (D,)
            shapes[f"blocks.{b}.{ln}.beta"] = (D,)
    shapes["output.weight"] = (D, V)
    shapes["output.bias"] = (V,)
    return shapes


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form parameter count for `config`."""
    D, F, V, L = config.hidden_dim, config.feature_dim, config.vocab_size, config.encoder_layers
    encoder = F * D + D + (L - 1) * (D * D + D)
    if config.head == "vr":
        return encoder + D + 1
    if config.head == "ordinal":
        return encoder + (D + 1) * config.num_buckets
    f = config.ffn_dim
    attention = 4 * (D * D + D)
    block = 2 * attention + (D * f + f + f * D + D) + 3 * 2 * D
    return encoder + V * D + (config.max_len + 2) * D + config.decoder_blocks * block + D * V + V


def init_params(config: ModelConfig, dtype=None) -> ModelParams:
    """Seeded init: Xavier-uniform matrices, zero biases and betas, unit gammas."""
    dtype = np.dtype(dtype or get_default_dtype())
    rng = np.random.default_rng(config.seed)
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-limit, limit, size=shape)
        tensors[name] = Tensor(data, requires_grad=True, name=name, dtype=dtype)
    params = ModelParams(config, tensors)
    logger.debug(f"Initialized {config.head} model with {params.num_parameters()} parameters")
    return params


# =============================================================================
# Encoder
# =============================================================================

def encode_features(x, params: ModelParams) -> Tensor:
    """h = W_L(...relu(W_1 x + b_1)...) + b_L; no activation after the last layer."""
    config = params.config
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[-1] != config.feature_dim:
        raise ShapeError(
            f"Feature vector has {x.shape[-1]} columns, model expects {config.feature_dim}."
        )
    h = x
    for layer in range(config.encoder_layers):
        h = h @ params[f"encoder.{layer}.weight"] + params[f"encoder.{layer}.bias"]
        if layer < config.encoder_layers - 1:
            h = relu(h)
    return h


# =============================================================================
# Decoder
# =============================================================================

def causal_mask(length: int) -> np.ndarray:
    """[T, T] additive mask: 0 on and below the diagonal, MASK_VALUE above."""
    upper = np.triu(np.ones((length, length), dtype=bool), k=1)
    return np.where(upper, MASK_VALUE, 0.0)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, T, D = x.shape
    return x.reshape(B, T, heads, D // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    B, H, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)


def multi_head_attention(
    query: Tensor, memory: Tensor, params: ModelParams, prefix: str,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Scaled dot-product attention of query [B, T, D] over memory [B, S, D]."""
    heads = params.config.attention_heads
    q = _split_heads(query @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"], heads)
    k = _split_heads(memory @ params[f"{prefix}.wk"] + params[f"{prefix}.bk"], heads)
    v = _split_heads(memory @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"], heads)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(params.config.head_dim))
    if mask is not None:
        scores = scores + mask
    weights = softmax(scores, axis=-1)
    context = _merge_heads(weights @ v)
    return context @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def decoder_block(x: Tensor, memory: Tensor, params: ModelParams, block: int) -> Tensor:
    p = f"blocks.{block}"
    mask = causal_mask(x.shape[1])
    attended = multi_head_attention(x, x, params, f"{p}.self_attn", mask)
    x = layer_norm(x + attended, params[f"{p}.ln1.gamma"], params[f"{p}.ln1.beta"])
    crossed = multi_head_attention(x, memory, params, f"{p}.cross_attn")
    x = layer_norm(x + crossed, params[f"{p}.ln2.gamma"], params[f"{p}.ln2.beta"])
    hidden = relu(x @ params[f"{p}.ffn.w1"] + params[f"{p}.ffn.b1"])
    out = hidden @ params[f"{p}.ffn.w2"] + params[f"{p}.ffn.b2"]
    return layer_norm(x + out, params[f"{p}.ln3.gamma"], params[f"{p}.ln3.beta"])


def embed_tokens(input_ids, params: ModelParams) -> Tensor:
    """Token embedding rows E[id] (positional embeddings are added later)."""
    ids = np.asarray(input_ids, dtype=np.int64)
    vocab_size = params.config.vocab_size
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        bad = ids[(ids < 0) | (ids >= vocab_size)]
        raise CodecError(f"Invalid token id {int(bad[0])} for vocab_size {vocab_size}.")
    return take_rows(params["embedding"], ids)


def decoder_forward_embeddings(h, token_embeddings: Tensor, params: ModelParams) -> Tensor:
    """Logits for already-embedded decoder inputs [B, T, D] (or [T, D])."""
    h = h if isinstance(h, Tensor) else Tensor(h)
    unbatched = token_embeddings.ndim == 2
    if unbatched:
        token_embeddings = token_embeddings.reshape(1, *token_embeddings.shape)
        h = h.reshape(1, -1)
    length = token_embeddings.shape[1]
    if length > params.config.max_len + 1:
        raise ShapeError(
            f"Decoder input of length {length} exceeds max_len + 1 = {params.config.max_len + 1}."
        )
    if h.shape[0] != token_embeddings.shape[0]:
        raise ShapeError(f"Batch mismatch: h {h.shape} vs inputs {token_embeddings.shape}.")

    x = token_embeddings + params["positional"][:length]
    memory = h.reshape(h.shape[0], 1, h.shape[1])
    for b in range(params.config.decoder_blocks):
        x = decoder_block(x, memory, params, b)
    logits = x @ params["output.weight"] + params["output.bias"]
    if unbatched:
        logits = logits.reshape(length, params.config.vocab_size)
    return logits


def decoder_forward(h, input_ids, params: ModelParams) -> Tensor:
    """Per-position vocabulary logits for SOS-framed input ids."""
    return decoder_forward_embeddings(h, embed_tokens(input_ids, params), params)


# =============================================================================
# Sequence framing
# =============================================================================

@dataclass
class FramedBatch:
    input_ids: np.ndarray
    target_ids: np.ndarray
    target_mask: np.ndarray

    @property
    def length(self) -> int:
        return self.input_ids.shape[1]


def frame_batch(sequences: Sequence[Sequence[int]], length: Optional[int] = None) -> FramedBatch:
    """Build decoder inputs [SOS, s_1..s_n, PAD..] and targets [s_1..s_n, EOS, PAD..].

    `length` defaults to the longest sequence plus one; a larger value only
    appends PAD positions.
    """
    longest = max((len(s) for s in sequences), default=0) + 1
    length = longest if length is None else length
    if length < longest:
        raise ShapeError(f"Frame length {length} is shorter than the longest sequence ({longest}).")
    n = len(sequences)
    inputs = np.full((n, length), PAD_ID, dtype=np.int64)
    targets = np.full((n, length), PAD_ID, dtype=np.int64)
    for i, seq in enumerate(sequences):
        k = len(seq)
        inputs[i, 0] = SOS_ID
        inputs[i, 1:k + 1] = seq
        targets[i, :k] = seq
        targets[i, k] = EOS_ID
    return FramedBatch(input_ids=inputs, target_ids=targets, target_mask=targets != PAD_ID)
