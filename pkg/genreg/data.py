# genreg/data.py
# -*- coding: utf-8 -*-
"""Dataset ingestion, deterministic splits and the synthetic long-tailed generator."""

import logging
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import yaml

from genreg.config import ConfigSection
from genreg.errors import DataValidationError

logger = logging.getLogger(__name__)

DEFAULT_TARGET = "y"
MAX_REJECT_FRACTION = 0.01


@dataclass
class DatasetSchema:
    """Column selection for CSV ingestion. Features default to every non-target column."""
    feature_columns: Optional[List[str]] = None
    target_column: str = DEFAULT_TARGET
    ratio_column: Optional[str] = None
    id_column: Optional[str] = None
    units: str = "seconds"

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSchema":
        """Create a DatasetSchema from a dictionary, ignoring unknown keys."""
        known_fields = {f.name for f in cls.__dataclass_fields__.values()}
        return cls(**{k: v for k, v in data.items() if k in known_fields})

    @classmethod
    def load(cls, path: str) -> "DatasetSchema":
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
        if not isinstance(raw, dict):
            raise DataValidationError(f"Schema file '{path}' must contain a mapping.")
        return cls.from_dict(raw)


@dataclass
class Rejection:
    line: int
    reason: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.reason}"


@dataclass
class Dataset:
    """Dense features [N, F] with nonnegative targets [N], in input order."""
    features: np.ndarray
    targets: np.ndarray
    feature_names: List[str]
    target_name: str = DEFAULT_TARGET
    row_ids: Optional[np.ndarray] = None
    rejections: List[Rejection] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) != len(self.targets):
            raise DataValidationError(
                f"features {self.features.shape} and targets {self.targets.shape} do not align."
            )
        if self.row_ids is None:
            self.row_ids = np.arange(len(self.targets), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            targets=self.targets[indices],
            feature_names=list(self.feature_names),
            target_name=self.target_name,
            row_ids=self.row_ids[indices],
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.targets, list(self.feature_names),
                       self.target_name, self.row_ids.copy())


# =============================================================================
# CSV ingestion
# =============================================================================

def load_csv(
    path: str,
    schema: Optional[DatasetSchema] = None,
    max_reject_fraction: float = MAX_REJECT_FRACTION,
    require_target: bool = True,
) -> Dataset:
    """Parse a UTF-8 CSV with a header row.

    Rows with non-numeric cells, non-finite or negative targets (or a
    non-positive ratio denominator) are rejected with their line numbers. More
    than `max_reject_fraction` rejected rows is a hard error. With
    `require_target=False` the target column may be absent (prediction input).
    """
    schema = schema or DatasetSchema()
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise DataValidationError(f"'{path}' has no header row.") from e

    has_target = schema.target_column in frame.columns
    if require_target and not has_target:
        raise DataValidationError(f"'{path}' is missing target column '{schema.target_column}'.")

    reserved = {schema.target_column, schema.ratio_column, schema.id_column}
    feature_columns = schema.feature_columns or [c for c in frame.columns if c not in reserved]
    needed = list(feature_columns)
    if has_target:
        needed.append(schema.target_column)
        if schema.ratio_column:
            needed.append(schema.ratio_column)
    if schema.id_column:
        needed.append(schema.id_column)
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise DataValidationError(f"'{path}' is missing column(s): {', '.join(missing)}")
    if not feature_columns:
        raise DataValidationError(f"'{path}' has no feature columns.")

    numeric = frame[needed].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    rejections: List[Rejection] = []
    keep = np.ones(len(frame), dtype=bool)
    for i in range(len(frame)):
        # Header is line 1.
        line = i + 2
        row = numeric.iloc[i]
        bad_cells = [c for c in needed if not np.isfinite(row[c])]
        if bad_cells:
            rejections.append(Rejection(line, f"non-numeric cell in column '{bad_cells[0]}'"))
            keep[i] = False
            continue
        if has_target and row[schema.target_column] < 0:
            rejections.append(Rejection(line, f"negative target {row[schema.target_column]:g}"))
            keep[i] = False
            continue
        if has_target and schema.ratio_column and row[schema.ratio_column] <= 0:
            rejections.append(Rejection(line, f"non-positive '{schema.ratio_column}'"))
            keep[i] = False

    total = len(frame)
    if rejections:
        for rejection in rejections[:10]:
            logger.warning(f"Rejected {path} {rejection}")
        if total and len(rejections) / total > max_reject_fraction:
            listed = "; ".join(str(r) for r in rejections[:10])
            raise DataValidationError(
                f"{len(rejections)}/{total} rows rejected in '{path}' "
                f"(limit {max_reject_fraction:.0%}): {listed}"
            )

    accepted = numeric[keep]
    if has_target:
        targets = accepted[schema.target_column].to_numpy(dtype=np.float64)
        if schema.ratio_column:
            targets = targets / accepted[schema.ratio_column].to_numpy(dtype=np.float64)
    else:
        targets = np.zeros(len(accepted))
    row_ids = (accepted[schema.id_column].to_numpy(dtype=np.int64) if schema.id_column
               else np.flatnonzero(keep).astype(np.int64))

    dataset = Dataset(
        features=accepted[feature_columns].to_numpy(dtype=np.float64),
        targets=targets,
        feature_names=list(feature_columns),
        target_name=schema.target_column,
        row_ids=row_ids,
        rejections=rejections,
    )
    logger.info(f"Loaded {len(dataset)} rows ({len(rejections)} rejected) from {path}")
    return dataset


def write_csv(dataset: Dataset, path: str) -> None:
    """Features then target, one row per sample."""
    frame = pd.DataFrame(dataset.features, columns=dataset.feature_names)
    frame[dataset.target_name] = dataset.targets
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    logger.info(f"Wrote {len(dataset)} rows to {path}")


# =============================================================================
# Standardization
# =============================================================================

@dataclass
class FeatureScaler:
    """Per-column mean/std frozen from the training split."""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=np.float64)
        std = features.std(axis=0)
        # Constant columns pass through centered.
        std = np.where(std > 0, std, 1.0)
        return cls(mean=features.mean(axis=0), std=std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != len(self.mean):
            raise DataValidationError(
                f"Scaler fitted on {len(self.mean)} features, got {features.shape[-1]}."
            )
        return (features - self.mean) / self.std

    def to_dict(self) -> Dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "FeatureScaler":
        return cls(mean=np.asarray(data["mean"], dtype=np.float64),
                   std=np.asarray(data["std"], dtype=np.float64))


# =============================================================================
# Splits
# =============================================================================

def split(dataset: Dataset, ratio: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle then partition; each part keeps input order."""
    if not 0 < ratio < 1:
        raise DataValidationError(f"Split ratio must be in (0, 1), got {ratio}.")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    k = int(round(ratio * n))
    if n >= 2:
        k = min(max(k, 1), n - 1)
    return dataset.subset(np.sort(order[:k])), dataset.subset(np.sort(order[k:]))


# =============================================================================
# Synthetic long-tailed data
# =============================================================================

@dataclass
class SynthParams(ConfigSection):
    """Generator parameters.

    y = scale * exp(a * z + b * eps), clipped to [0, y_cap] and rounded to
    `resolution`, where z is a unit-variance projection of x. A second
    projection zeroes out roughly `zero_fraction` of the samples.
    """
    a: float = 0.8
    b: float = 0.5
    scale: float = 10.0
    y_cap: float = 300.0
    zero_fraction: float = 0.05
    resolution: float = 0.01


def synth_longtail(n: int, d: int, seed: int, params: Optional[SynthParams] = None) -> Dataset:
    """Seeded long-tailed regression data with standard normal features."""
    if n < 1 or d < 1:
        raise DataValidationError(f"Need n >= 1 and d >= 1, got n={n}, d={d}.")
    params = params or SynthParams()
    rng = np.random.default_rng(seed)

    w = rng.standard_normal(d)
    w_zero = rng.standard_normal(d)
    x = rng.standard_normal((n, d))
    noise = rng.standard_normal(n)

    z = x @ w / np.linalg.norm(w)
    y = params.scale * np.exp(params.a * z + params.b * noise)
    y = np.clip(y, 0.0, params.y_cap)

    if params.zero_fraction > 0:
        threshold = NormalDist().inv_cdf(min(params.zero_fraction, 1 - 1e-12))
        z_zero = x @ w_zero / np.linalg.norm(w_zero)
        y = np.where(z_zero < threshold, 0.0, y)

    y = np.round(np.round(y / params.resolution) * params.resolution, 12)
    names = [f"f{i}" for i in range(d)]
    logger.debug(f"Synthesized {n} samples (d={d}, seed={seed}), mean y {y.mean():.3f}")
    return Dataset(features=x, targets=y, feature_names=names)
