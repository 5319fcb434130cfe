# tests/conftest.py
# -*- coding: utf-8 -*-
"""Shared fixtures; `--runslow` enables the long training experiments."""

import numpy as np
import pytest

from genreg.autodiff import get_default_dtype, set_default_dtype
from genreg.data import SynthParams, synth_longtail
from genreg.model import ModelConfig, init_params
from genreg.vocab import build_manual


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def float64_default():
    """Every test starts (and ends) in float64."""
    previous = get_default_dtype()
    set_default_dtype("float64")
    yield
    set_default_dtype(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_vocab():
    """Values 30, 10, 5, 1, 0.5, 0.1, 0.05, 0.01 (ids 3..10)."""
    return build_manual([30, 10, 5, 1, 0.5, 0.1, 0.05, 0.01])


@pytest.fixture
def tiny_config(small_vocab):
    return ModelConfig(
        feature_dim=4, vocab_size=small_vocab.size, hidden_dim=8, encoder_layers=2,
        decoder_blocks=1, attention_heads=2, ffn_mult=2, max_len=6, head="gr", seed=3,
    )


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config)


@pytest.fixture
def synth_small():
    """400 noiseless long-tailed rows, d=4."""
    return synth_longtail(400, 4, seed=7, params=SynthParams(b=0.0))
