# settings.py
# -*- coding: utf-8 -*-
"""Centralized settings management for the toolkit."""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Tuple

import yaml

from genreg.config import ConfigSection
from genreg.data import SynthParams
from genreg.errors import ConfigError
from genreg.model import ModelConfig
from genreg.training import ScheduleConfig, TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class ToolkitSettings(ConfigSection):
    """Process-wide settings: logging, run registry, outputs, numeric precision."""
    log_level: str = "INFO"
    log_file: Optional[str] = None
    registry_path: str = "genreg_runs.db"
    registry_enabled: bool = True
    output_dir: str = "runs"
    dtype: str = "float64"


@dataclass
class VocabSettings(ConfigSection):
    """Vocabulary construction parameters for every strategy."""
    strategy: str = "dynamic"
    q_start: float = 99.0
    q_end: float = 50.0
    alpha: float = 0.95
    eps: float = 1e-3
    resolution: float = 0.01
    max_iterations: int = 128
    unit: float = 1.0
    y_max: Optional[float] = None
    values: Tuple[float, ...] = ()
    base: Tuple[float, ...] = (1.0, 3.0, 5.0)
    max_len: int = 32


@dataclass
class DataSettings(ConfigSection):
    """Synthetic generator sizes and parameters, plus split ratios."""
    n: int = 10000
    d: int = 8
    seed: int = 0
    a: float = 0.8
    b: float = 0.5
    scale: float = 10.0
    y_cap: float = 300.0
    zero_fraction: float = 0.05
    resolution: float = 0.01
    test_ratio: float = 0.2
    val_ratio: float = 0.1

    def synth_params(self) -> SynthParams:
        return SynthParams(a=self.a, b=self.b, scale=self.scale, y_cap=self.y_cap,
                           zero_fraction=self.zero_fraction, resolution=self.resolution)


@dataclass
class ExperimentSettings:
    """Every config section in one bundle."""
    toolkit: ToolkitSettings = field(default_factory=ToolkitSettings)
    vocab: VocabSettings = field(default_factory=VocabSettings)
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    SECTIONS = ("toolkit", "vocab", "data", "model", "schedule", "train")

    def section(self, name: str) -> ConfigSection:
        if name not in self.SECTIONS:
            raise ConfigError(f"Unknown config section '{name}'. Choose from {', '.join(self.SECTIONS)}.")
        return getattr(self, name)

    def update(self, dotted_key: str, value: Any) -> bool:
        """Set `section.key` with type coercion. Returns True if successful."""
        section_name, _, key = dotted_key.partition(".")
        if not key or section_name not in self.SECTIONS:
            return False
        return self.section(section_name).update(key, value)

    def to_dict(self) -> Dict[str, Dict]:
        return {name: getattr(self, name).to_dict() for name in self.SECTIONS}


# Environment variable -> settings key
ENV_OVERRIDES = {
    'GENREG_LOG_LEVEL': 'toolkit.log_level',
    'GENREG_LOG_FILE': 'toolkit.log_file',
    'GENREG_REGISTRY': 'toolkit.registry_path',
    'GENREG_OUTPUT_DIR': 'toolkit.output_dir',
    'GENREG_DTYPE': 'toolkit.dtype',
}


def _read_key_value_file(config_file: str) -> Dict[str, str]:
    """Parse `section.key = value` lines; `#` starts a comment."""
    entries: Dict[str, str] = {}
    with open(config_file, 'r', encoding='utf-8') as f:
        for number, raw_line in enumerate(f, start=1):
            line = raw_line.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if not sep or not key.strip():
                logger.critical(f"Error parsing '{config_file}' line {number}: expected 'section.key = value'.")
                raise SystemExit(1)
            entries[key.strip()] = value.strip()
    return entries


def _read_yaml_file(config_file: str) -> Dict[str, str]:
    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        logger.critical(f"Error parsing '{config_file}': {e}")
        raise SystemExit(1)

    if raw is None:
        return {}
    if not isinstance(raw, dict):
        logger.critical(f"Invalid config format in '{config_file}'.")
        raise SystemExit(1)

    entries: Dict[str, Any] = {}
    for section_name, section_data in raw.items():
        if not isinstance(section_data, dict):
            logger.warning(f"Ignoring non-mapping section '{section_name}' in {config_file}")
            continue
        for key, value in section_data.items():
            entries[f"{section_name}.{key}"] = value
    return entries


def apply_overrides(settings: ExperimentSettings, overrides: Iterable[str]) -> None:
    """Apply `section.key=value` strings (from --set); bad entries raise ConfigError."""
    for item in overrides or ():
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(f"Override '{item}' must look like section.key=value.")
        if not settings.update(key.strip(), value.strip()):
            raise ConfigError(f"Cannot apply override '{item}': unknown key or invalid value.")


def load_config(config_file: Optional[str] = 'config.yaml', overrides: Iterable[str] = ()) -> ExperimentSettings:
    """Load settings from YAML or key=value text, then env vars, then --set overrides.

    A missing file leaves the defaults in place.
    """
    settings = ExperimentSettings()

    if config_file and os.path.exists(config_file):
        if config_file.endswith(('.yaml', '.yml')):
            entries = _read_yaml_file(config_file)
        else:
            entries = _read_key_value_file(config_file)
        applied = 0
        for key, value in entries.items():
            if settings.update(key, value):
                applied += 1
            else:
                logger.warning(f"Ignoring unknown or invalid setting '{key}' in {config_file}")
        logger.info(f"Loaded {applied} settings from {config_file}.")
    elif config_file:
        logger.info(f"Configuration file '{config_file}' not found; using defaults.")

    # Override with environment variables
    for env_key, setting_key in ENV_OVERRIDES.items():
        env_val = os.getenv(env_key)
        if env_val:
            settings.update(setting_key, env_val)

    apply_overrides(settings, overrides)
    return settings
