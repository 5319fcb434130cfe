# genreg/errors.py
# -*- coding: utf-8 -*-
"""Exception hierarchy shared by the library and the command layer."""


class GenRegError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(GenRegError):
    """Invalid or inconsistent configuration values."""


class ShapeError(GenRegError, ValueError):
    """Tensor shapes do not line up for the requested operation."""


class GraphError(GenRegError):
    """Misuse of the autodiff graph (non-scalar loss, repeated backward)."""


class VocabularyError(GenRegError):
    """A value vocabulary violates its invariants or cannot be loaded."""


class DegenerateTargetsError(VocabularyError):
    """Targets carry no information (for example, all zero)."""


class ConvergenceError(VocabularyError):
    """Vocabulary construction did not reach its error bound within the cap."""


class CodecError(GenRegError):
    """Token ids cannot be decoded against the vocabulary."""


class CheckpointError(GenRegError):
    """Checkpoint file is malformed or does not match its configuration."""


class DataValidationError(GenRegError):
    """Input data failed validation (too many rejected rows, missing columns)."""


class TrainingDivergedError(GenRegError):
    """A training loss became NaN or infinite."""


class MetricError(GenRegError):
    """A metric is undefined for the given inputs."""
