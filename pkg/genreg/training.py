# genreg/training.py
# -*- coding: utf-8 -*-
"""Composite-loss training with teacher forcing and curriculum embedding mixup.

A curriculum step runs the decoder twice with shared parameters. Pass 1 is
plain teacher forcing. Pass 2 feeds, position by position, either the
ground-truth token embedding (probability p) or a softmax blend of the
embeddings around the token pass 1 predicted one step earlier. The blend
weights come from pass-1 logits, so pass 2's loss also trains pass 1.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from genreg.autodiff import (
    MASK_VALUE,
    Tensor,
    concat,
    cross_entropy,
    gather_last,
    huber_elementwise,
    softmax,
    take_rows,
    where,
)
from genreg.baselines import BucketScheme, build_bucket_scheme, ordinal_loss, vr_head
from genreg.codec import encode
from genreg.config import ConfigSection
from genreg.data import Dataset, FeatureScaler
from genreg.errors import ConfigError, MetricError, TrainingDivergedError
from genreg.model import (
    FramedBatch,
    ModelConfig,
    ModelParams,
    decoder_forward,
    decoder_forward_embeddings,
    embed_tokens,
    encode_features,
    frame_batch,
    init_params,
)
from genreg.optim import Adam
from genreg.vocab import NUM_SPECIAL, PAD_ID, SOS_ID, ValueVocabulary

logger = logging.getLogger(__name__)

SCHEDULES = ("paper_sigmoid", "linear", "exponential", "fixed")

# e^x overflows float64 past ~709.
_EXP_LIMIT = 700.0


# =============================================================================
# Configuration
# =============================================================================

@dataclass
class ScheduleConfig(ConfigSection):
    """Ground-truth sampling rate p over training iterations.

    Unset `omega`, `linear_rate` and `exp_rate` are derived from the run
    length so that p reaches `p_final` at the last step.
    """
    strategy: str = "paper_sigmoid"
    p0: float = 1.0
    omega: Optional[float] = None
    p_final: float = 0.05
    linear_rate: Optional[float] = None
    exp_rate: Optional[float] = None
    fixed_p: float = 0.5

    def validate(self) -> None:
        if self.strategy not in SCHEDULES:
            raise ConfigError(f"Unknown schedule '{self.strategy}'. Choose from {', '.join(SCHEDULES)}.")
        if self.omega is not None and self.omega <= 0:
            raise ConfigError(f"schedule.omega must be positive, got {self.omega}.")
        if not 0 < self.p_final <= 1:
            raise ConfigError(f"schedule.p_final must be in (0, 1], got {self.p_final}.")


@dataclass
class TrainConfig(ConfigSection):
    huber_lambda: float = 0.1
    huber_delta: float = 1.0
    mixup_window: int = 2
    clem_enabled: bool = True
    mixup_enabled: bool = True
    learning_rate: float = 1e-3
    batch_size: int = 64
    steps: int = 3000
    eval_every: int = 250
    seed: int = 0
    max_eval_samples: int = 2000

    def validate(self) -> None:
        if self.huber_lambda < 0:
            raise ConfigError(f"train.huber_lambda must be >= 0, got {self.huber_lambda}.")
        if self.huber_delta <= 0:
            raise ConfigError(f"train.huber_delta must be > 0, got {self.huber_delta}.")
        if self.mixup_window < 0:
            raise ConfigError(f"train.mixup_window must be >= 0, got {self.mixup_window}.")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.steps < 0:
            raise ConfigError("train needs learning_rate > 0, batch_size >= 1 and steps >= 0.")
        if self.eval_every < 1:
            raise ConfigError(f"train.eval_every must be >= 1, got {self.eval_every}.")


# Ablation rows: (schedule overrides, train overrides).
VARIANTS: Dict[str, tuple] = {
    "full": ({}, {"clem_enabled": True, "mixup_enabled": True}),
    "no_clem": ({}, {"clem_enabled": False, "mixup_enabled": False}),
    "em_tf": ({"strategy": "fixed", "fixed_p": 1.0}, {"clem_enabled": False, "mixup_enabled": True}),
    "cl_no_em": ({}, {"clem_enabled": True, "mixup_enabled": False}),
    "linear": ({"strategy": "linear"}, {"clem_enabled": True, "mixup_enabled": True}),
    "exponential": ({"strategy": "exponential"}, {"clem_enabled": True, "mixup_enabled": True}),
    "fixed0.5": ({"strategy": "fixed", "fixed_p": 0.5}, {"clem_enabled": True, "mixup_enabled": True}),
    "fixed0": ({"strategy": "fixed", "fixed_p": 0.0}, {"clem_enabled": True, "mixup_enabled": True}),
}


def apply_variant(name: str, schedule: ScheduleConfig, config: TrainConfig):
    """Copies of `schedule` and `config` with an ablation variant applied."""
    if name not in VARIANTS:
        raise ConfigError(f"Unknown variant '{name}'. Choose from {', '.join(VARIANTS)}.")
    schedule_overrides, train_overrides = VARIANTS[name]
    return replace(schedule, **schedule_overrides), replace(config, **train_overrides)


# =============================================================================
# Sampling-rate schedules
# =============================================================================

def _sigmoid_rate(tau: float, omega: float, p0: float) -> float:
    ratio = tau / omega
    if ratio > _EXP_LIMIT:
        return 0.0
    return p0 * omega / (omega + math.exp(ratio))


def omega_for_final_rate(total_steps: int, p_final: float = 0.05, p0: float = 1.0) -> float:
    """omega such that the sigmoid schedule gives p_final at `total_steps`.

    p(T) grows monotonically with omega, so a log-space bisection converges.
    """
    if total_steps <= 0:
        return 1.0
    if p_final >= p0:
        raise ConfigError(f"p_final ({p_final}) must be below p0 ({p0}).")
    lo, hi = 1e-6, 1e12
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if _sigmoid_rate(total_steps, mid, p0) < p_final:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def sampling_rate(schedule: ScheduleConfig, tau: float, total_steps: Optional[int] = None) -> float:
    """Probability of feeding the ground-truth token at iteration `tau`, in [0, 1]."""
    if tau < 0:
        raise ConfigError(f"Iteration must be >= 0, got {tau}.")
    strategy = schedule.strategy

    def horizon() -> int:
        if not total_steps:
            raise ConfigError(f"The {strategy} schedule needs total_steps when its rate is unset.")
        return total_steps

    if strategy == "paper_sigmoid":
        omega = schedule.omega or omega_for_final_rate(horizon(), schedule.p_final, schedule.p0)
        p = _sigmoid_rate(tau, omega, schedule.p0)
    elif strategy == "linear":
        rate = schedule.linear_rate
        if rate is None:
            rate = (schedule.p0 - schedule.p_final) / horizon()
        p = schedule.p0 - rate * tau
    elif strategy == "exponential":
        rate = schedule.exp_rate
        if rate is None:
            rate = (schedule.p_final / schedule.p0) ** (1.0 / horizon())
        p = schedule.p0 * rate ** tau
    elif strategy == "fixed":
        p = schedule.fixed_p
    else:
        raise ConfigError(f"Unknown schedule '{strategy}'.")
    return float(min(max(p, 0.0), 1.0))


# =============================================================================
# Losses
# =============================================================================

def huber(y, y_hat, delta: float = 1.0) -> Tensor:
    """Mean Huber loss; quadratic within delta, linear beyond."""
    if delta <= 0:
        raise ConfigError(f"Huber delta must be positive, got {delta}.")
    return huber_elementwise(y_hat, y, delta).mean()


def sequence_ce(logits: Tensor, target_ids, pad_mask, reduction: str = "mean") -> Tensor:
    """Cross-entropy over the positions where `pad_mask` is True."""
    mask = np.asarray(pad_mask, dtype=logits.dtype)
    total = (cross_entropy(logits, target_ids) * mask).sum()
    if reduction == "sum":
        return total
    return total * (1.0 / max(float(mask.sum()), 1.0))


def composite_loss(ce, huber_value, lam: float):
    if lam < 0:
        raise ConfigError(f"Loss balance must be >= 0, got {lam}.")
    return ce + lam * huber_value


def soft_decoded_value(logits: Tensor, token_values: np.ndarray, mask) -> Tensor:
    """Differentiable stand-in for the decoded target: sum_t E_softmax[g]."""
    expected = (softmax(logits, axis=-1) * np.asarray(token_values, dtype=logits.dtype)).sum(axis=-1)
    return (expected * np.asarray(mask, dtype=logits.dtype)).sum(axis=-1)


def hard_decoded_value(logits: np.ndarray, token_values: np.ndarray, mask) -> np.ndarray:
    """sum_t g(argmax logits_t) over supervised positions."""
    picked = np.asarray(token_values)[np.argmax(logits, axis=-1)]
    return (picked * np.asarray(mask)).sum(axis=-1)


# =============================================================================
# Embedding mixup
# =============================================================================

def embedding_mixup(
    step_logits,
    embedding: Tensor,
    predicted_id,
    window: int,
    first_value_id: int = NUM_SPECIAL,
    last_value_id: Optional[int] = None,
) -> Tensor:
    """Blend of value-token embeddings around `predicted_id`.

    The window spans predicted_id - b .. predicted_id + b with b = window // 2,
    restricted to value-token ids; the softmax of the logits inside it weighs
    the rows of `embedding`. A special predicted id returns its raw row.
    Accepts one step (logits [V], scalar id) or a batch (logits [N, V], ids [N]).
    """
    step_logits = step_logits if isinstance(step_logits, Tensor) else Tensor(step_logits)
    single = step_logits.ndim == 1
    if single:
        step_logits = step_logits.reshape(1, -1)
    predicted = np.atleast_1d(np.asarray(predicted_id, dtype=np.int64))
    if last_value_id is None:
        last_value_id = step_logits.shape[-1] - 1

    half = window // 2
    ids = predicted[:, None] + np.arange(-half, half + 1)[None, :]
    in_range = (ids >= first_value_id) & (ids <= last_value_id)
    clipped = np.clip(ids, first_value_id, last_value_id)

    window_logits = where(in_range, gather_last(step_logits, clipped), MASK_VALUE)
    weights = softmax(window_logits, axis=-1)
    rows = take_rows(embedding, clipped)
    n, width = clipped.shape
    fused = (weights.reshape(n, width, 1) * rows).sum(axis=1)

    special = predicted < first_value_id
    if np.any(special):
        raw = take_rows(embedding, predicted)
        fused = where(special[:, None], raw, fused)
    return fused.reshape(-1) if single else fused


# =============================================================================
# Train steps
# =============================================================================

@dataclass
class TrainBatch:
    features: np.ndarray
    targets: np.ndarray
    framed: Optional[FramedBatch] = None


def make_batch(features, targets, sequences: Optional[Sequence[Sequence[int]]] = None,
               length: Optional[int] = None) -> TrainBatch:
    framed = frame_batch(sequences, length) if sequences is not None else None
    return TrainBatch(np.asarray(features), np.asarray(targets, dtype=np.float64), framed)


@dataclass
class StepResult:
    loss: Tensor
    ce1: Optional[float] = None
    ce2: Optional[float] = None
    huber: Optional[float] = None
    hard_huber: Optional[float] = None
    p: Optional[float] = None

    @property
    def value(self) -> float:
        return self.loss.item()

    def as_record(self) -> Dict[str, Optional[float]]:
        return {"loss": self.value, "ce1": self.ce1, "ce2": self.ce2,
                "huber": self.huber, "p": self.p}


def _huber_terms(logits: Tensor, batch: TrainBatch, vocab: ValueVocabulary, config: TrainConfig):
    mask = batch.framed.target_mask
    y_soft = soft_decoded_value(logits, vocab.values, mask)
    huber_value = huber(batch.targets, y_soft, config.huber_delta)
    y_hard = hard_decoded_value(logits.data, vocab.values, mask)
    hard = huber(batch.targets, y_hard, config.huber_delta).item()
    return huber_value, hard


def teacher_forcing_loss(params: ModelParams, batch: TrainBatch, vocab: ValueVocabulary,
                         config: TrainConfig) -> StepResult:
    """One parallel decoder pass on ground-truth prefixes."""
    framed = batch.framed
    h = encode_features(batch.features, params)
    logits = decoder_forward(h, framed.input_ids, params)
    ce = sequence_ce(logits, framed.target_ids, framed.target_mask)
    huber_value, hard = _huber_terms(logits, batch, vocab, config)
    loss = composite_loss(ce, huber_value, config.huber_lambda)
    return StepResult(loss, ce1=ce.item(), huber=huber_value.item(), hard_huber=hard, p=1.0)


def draw_ground_truth_mask(rng: np.random.Generator, input_ids: np.ndarray, p: float) -> np.ndarray:
    """Per-position Bernoulli(p) choice of ground truth; SOS and PAD inputs always keep it."""
    choose = rng.random(input_ids.shape) < p
    choose[:, 0] = True
    choose |= input_ids == PAD_ID
    return choose


def previous_token_ids(logits: np.ndarray) -> np.ndarray:
    """Argmax over ids inference may emit; PAD and SOS never win."""
    step = np.array(logits, copy=True)
    step[..., PAD_ID] = -np.inf
    step[..., SOS_ID] = -np.inf
    return np.argmax(step, axis=-1)


def clem_loss(params: ModelParams, batch: TrainBatch, vocab: ValueVocabulary,
              config: TrainConfig, ground_truth_mask: np.ndarray, p: Optional[float] = None) -> StepResult:
    """Two-pass loss: mean of both passes' CE plus lambda * Huber on pass 2."""
    framed = batch.framed
    h = encode_features(batch.features, params)
    logits1 = decoder_forward(h, framed.input_ids, params)
    ce1 = sequence_ce(logits1, framed.target_ids, framed.target_mask)

    if np.all(ground_truth_mask):
        # Every input is ground truth: pass 2 repeats pass 1, so the loss is
        # built exactly as teacher forcing builds it.
        huber_value, hard = _huber_terms(logits1, batch, vocab, config)
        loss = composite_loss(ce1, huber_value, config.huber_lambda)
        return StepResult(loss, ce1=ce1.item(), ce2=ce1.item(), huber=huber_value.item(),
                          hard_huber=hard, p=p)

    embedding = params["embedding"]
    batch_size, length = framed.input_ids.shape
    truth = embed_tokens(framed.input_ids, params)
    previous = logits1[:, :-1, :].reshape(batch_size * (length - 1), -1)
    predicted = previous_token_ids(logits1.data[:, :-1, :]).reshape(-1)
    if config.mixup_enabled:
        generated = embedding_mixup(previous, embedding, predicted, config.mixup_window)
    else:
        generated = take_rows(embedding, predicted)
    generated = generated.reshape(batch_size, length - 1, -1)
    generated = concat([truth[:, :1, :], generated], axis=1)
    inputs = where(np.asarray(ground_truth_mask)[..., None], truth, generated)
    logits2 = decoder_forward_embeddings(h, inputs, params)

    ce2 = sequence_ce(logits2, framed.target_ids, framed.target_mask)
    huber_value, hard = _huber_terms(logits2, batch, vocab, config)
    loss = composite_loss((ce1 + ce2) * 0.5, huber_value, config.huber_lambda)
    return StepResult(loss, ce1=ce1.item(), ce2=ce2.item(), huber=huber_value.item(),
                      hard_huber=hard, p=p)


def train_step_teacher_forcing(batch: TrainBatch, params: ModelParams, vocab: ValueVocabulary,
                               config: TrainConfig) -> StepResult:
    """Loss components with gradients populated on `params`."""
    result = teacher_forcing_loss(params, batch, vocab, config)
    _check_finite(result, step=None)
    result.loss.backward()
    return result


def train_step_clem(batch: TrainBatch, params: ModelParams, vocab: ValueVocabulary,
                    config: TrainConfig, p: float, rng: np.random.Generator) -> StepResult:
    mask = draw_ground_truth_mask(rng, batch.framed.input_ids, p)
    result = clem_loss(params, batch, vocab, config, mask, p)
    _check_finite(result, step=None)
    result.loss.backward()
    return result


def baseline_loss(params: ModelParams, batch: TrainBatch, config: TrainConfig,
                  scheme: Optional[BucketScheme] = None) -> StepResult:
    """Huber on the raw regression output (vr) or bucket BCE (ordinal)."""
    h = encode_features(batch.features, params)
    if params.config.head == "vr":
        loss = huber(batch.targets, vr_head(h, params, clamp=False), config.huber_delta)
        return StepResult(loss, huber=loss.item())
    loss = ordinal_loss(h, params, scheme, batch.targets)
    return StepResult(loss, ce1=loss.item())


def _check_finite(result: StepResult, step: Optional[int]) -> None:
    value = result.value
    if not math.isfinite(value):
        where_ = f" at step {step}" if step is not None else ""
        raise TrainingDivergedError(
            f"Loss became {value}{where_} (ce1={result.ce1}, ce2={result.ce2}, "
            f"huber={result.huber}, p={result.p}). Try a lower learning rate or huber_lambda."
        )


# =============================================================================
# Trainer
# =============================================================================

def _batch_indices(rng: np.random.Generator, n: int, batch_size: int) -> Iterator[np.ndarray]:
    """Endless epochs of seeded permutations, cut into batches."""
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def _finite_or_none(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


@dataclass
class TrainResult:
    params: ModelParams
    records: List[Dict] = field(default_factory=list)
    best_step: int = 0
    best_val_mae: float = math.inf
    bucket_scheme: Optional[BucketScheme] = None
    scaler: Optional[FeatureScaler] = None


class Trainer:
    """Owns the mutable parameters of one training run."""

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        schedule: ScheduleConfig,
        vocab: Optional[ValueVocabulary] = None,
        bucket_scheme: Optional[BucketScheme] = None,
        progress: Optional[Callable[[int, int, Dict], None]] = None,
    ):
        model_config.validate()
        train_config.validate()
        schedule.validate()
        if model_config.head == "gr" and vocab is None:
            raise ConfigError("The gr head needs a value vocabulary.")
        if model_config.head == "ordinal" and bucket_scheme is None:
            raise ConfigError("The ordinal head needs a bucket scheme.")
        self.model_config = model_config
        self.config = train_config
        self.schedule = schedule
        self.vocab = vocab
        self.bucket_scheme = bucket_scheme
        self.progress = progress
        self.params = init_params(model_config)
        self.optimizer = Adam(self.params.parameters(), lr=train_config.learning_rate)
        batch_seed, curriculum_seed = np.random.SeedSequence(train_config.seed).spawn(2)
        self.batch_rng = np.random.default_rng(batch_seed)
        self.curriculum_rng = np.random.default_rng(curriculum_seed)

    @property
    def head(self) -> str:
        return self.model_config.head

    def step(self, batch: TrainBatch, tau: int) -> StepResult:
        """One optimizer update at iteration `tau` (0-based)."""
        self.optimizer.zero_grad()
        if self.head != "gr":
            result = baseline_loss(self.params, batch, self.config, self.bucket_scheme)
        elif self.config.clem_enabled:
            p = sampling_rate(self.schedule, tau, self.config.steps)
            mask = draw_ground_truth_mask(self.curriculum_rng, batch.framed.input_ids, p)
            result = clem_loss(self.params, batch, self.vocab, self.config, mask, p)
        else:
            result = teacher_forcing_loss(self.params, batch, self.vocab, self.config)
        _check_finite(result, tau + 1)
        result.loss.backward()
        self.optimizer.step()
        return result

    def evaluate(self, dataset: Dataset) -> Dict[str, Optional[float]]:
        from genreg.inference import predict_values
        from genreg.metrics import mae, xauc

        preds = predict_values(
            dataset.features, self.params, vocab=self.vocab, scheme=self.bucket_scheme,
            apply_mixup=self.config.mixup_enabled, mixup_window=self.config.mixup_window,
        )
        try:
            val_xauc = xauc(preds, dataset.targets, seed=self.config.seed)
        except MetricError:
            val_xauc = math.nan
        return {"val_mae": mae(preds, dataset.targets), "val_xauc": val_xauc}

    def fit(self, train_set: Dataset, val_set: Optional[Dataset] = None,
            metrics_path: Optional[str] = None) -> TrainResult:
        """Run `steps` updates, evaluating every `eval_every` and keeping the best-MAE weights."""
        config = self.config
        val_set = val_set if val_set is not None and len(val_set) else train_set
        if len(val_set) > config.max_eval_samples:
            val_set = val_set.subset(np.arange(config.max_eval_samples))

        sequences = None
        if self.head == "gr":
            max_len = self.model_config.max_len
            sequences = [encode(float(y), self.vocab, max_len).ids for y in train_set.targets]

        result = TrainResult(params=self.params, bucket_scheme=self.bucket_scheme)
        best_state = self.params.state_dict()
        batches = _batch_indices(self.batch_rng, len(train_set), config.batch_size)
        window: List[StepResult] = []
        log_file = open(metrics_path, "w", encoding="utf-8") if metrics_path else None

        try:
            eval_steps = set(range(config.eval_every, config.steps + 1, config.eval_every))
            eval_steps.add(config.steps)
            for step in range(0, config.steps + 1):
                if step > 0:
                    idx = next(batches)
                    batch = make_batch(
                        train_set.features[idx], train_set.targets[idx],
                        [sequences[i] for i in idx] if sequences is not None else None,
                    )
                    window.append(self.step(batch, step - 1))
                if step not in eval_steps:
                    continue

                record = self._record(step, window)
                record.update(self.evaluate(val_set))
                record = {k: _finite_or_none(v) if k != "step" else v for k, v in record.items()}
                window = []
                result.records.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
                    log_file.flush()
                if self.progress:
                    self.progress(step, config.steps, record)
                val_mae = record["val_mae"]
                if val_mae is not None and val_mae < result.best_val_mae:
                    result.best_val_mae = val_mae
                    result.best_step = step
                    best_state = self.params.state_dict()
        finally:
            if log_file:
                log_file.close()

        self.params.load_state_dict(best_state)
        logger.info(
            f"Training finished: best val MAE {result.best_val_mae:.4f} at step {result.best_step}"
        )
        return result

    @staticmethod
    def _record(step: int, window: List[StepResult]) -> Dict:
        def mean_of(name):
            values = [getattr(r, name) for r in window if getattr(r, name) is not None]
            return float(np.mean(values)) if values else None

        record = {"step": step}
        for name in ("ce1", "ce2", "huber"):
            record[name] = mean_of(name)
        record["loss"] = float(np.mean([r.value for r in window])) if window else None
        record["p"] = window[-1].p if window else None
        return record


def train(
    train_set: Dataset,
    val_set: Optional[Dataset],
    vocab: Optional[ValueVocabulary],
    model_config: ModelConfig,
    train_config: TrainConfig,
    schedule: ScheduleConfig,
    metrics_path: Optional[str] = None,
    progress: Optional[Callable[[int, int, Dict], None]] = None,
    standardize: bool = True,
) -> TrainResult:
    """Fit a scaler on the train split, size the model from the data, then train."""
    scaler = FeatureScaler.fit(train_set.features) if standardize else None
    if scaler is not None:
        train_set = train_set.with_features(scaler.transform(train_set.features))
        if val_set is not None:
            val_set = val_set.with_features(scaler.transform(val_set.features))

    scheme = None
    overrides = {"feature_dim": train_set.feature_dim}
    if model_config.head == "gr":
        overrides["vocab_size"] = vocab.size
    elif model_config.head == "ordinal":
        scheme = build_bucket_scheme(train_set.targets, model_config.num_buckets)
        overrides["num_buckets"] = scheme.num_buckets
    model_config = replace(model_config, **overrides)

    trainer = Trainer(model_config, train_config, schedule, vocab, scheme, progress)
    result = trainer.fit(train_set, val_set, metrics_path)
    result.scaler = scaler
    return result
