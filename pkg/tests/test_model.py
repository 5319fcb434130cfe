# tests/test_model.py
# -*- coding: utf-8 -*-

from dataclasses import replace

import numpy as np
import pytest

from genreg.autodiff import MASK_VALUE, Tensor, parameter
from genreg.errors import CodecError, ConfigError, ShapeError
from genreg.gradcheck import grad_check
from genreg.model import (
    ModelConfig,
    causal_mask,
    decoder_forward,
    decoder_forward_embeddings,
    embed_tokens,
    encode_features,
    expected_param_count,
    frame_batch,
    init_params,
    param_shapes,
)
from genreg.vocab import EOS_ID, PAD_ID, SOS_ID


# =============================================================================
# Configuration and parameters
# =============================================================================

class TestModelConfig:
    def test_heads_must_divide_hidden(self):
        with pytest.raises(ConfigError, match="divisible"):
            ModelConfig(hidden_dim=6, attention_heads=4).validate()

    def test_unknown_head(self):
        with pytest.raises(ConfigError):
            ModelConfig(head="mixture").validate()

    def test_zero_dimension(self):
        with pytest.raises(ConfigError):
            ModelConfig(hidden_dim=0).validate()

    def test_derived_dims(self):
        config = ModelConfig(hidden_dim=12, attention_heads=3, ffn_mult=2)
        assert config.head_dim == 4
        assert config.ffn_dim == 24


@pytest.mark.parametrize("head", ["gr", "vr", "ordinal"])
def test_parameter_count_matches_closed_form(tiny_config, head):
    config = replace(tiny_config, head=head, num_buckets=5)
    params = init_params(config)
    assert params.num_parameters() == expected_param_count(config)
    assert list(params) == list(param_shapes(config))


def test_embedding_and_output_follow_vocab_size(tiny_params, small_vocab):
    assert tiny_params["embedding"].shape[0] == small_vocab.size
    assert tiny_params["output.weight"].shape[1] == small_vocab.size
    assert tiny_params["positional"].shape[0] == tiny_params.config.max_len + 2


def test_init_is_seeded(tiny_config):
    first = init_params(tiny_config).state_dict()
    second = init_params(tiny_config).state_dict()
    other = init_params(replace(tiny_config, seed=4)).state_dict()
    assert all(np.array_equal(first[k], second[k]) for k in first)
    assert not np.array_equal(first["embedding"], other["embedding"])


def test_init_conventions(tiny_params):
    assert np.all(tiny_params["blocks.0.ln1.gamma"].data == 1.0)
    assert np.all(tiny_params["blocks.0.ln1.beta"].data == 0.0)
    assert np.all(tiny_params["output.bias"].data == 0.0)


# =============================================================================
# Forward shapes
# =============================================================================

class TestForward:
    def test_encoder_shape(self, tiny_params, rng):
        h = encode_features(rng.normal(size=(5, 4)), tiny_params)
        assert h.shape == (5, 8)

    def test_encoder_rejects_wrong_width(self, tiny_params):
        with pytest.raises(ShapeError):
            encode_features(np.zeros((2, 3)), tiny_params)

    def test_batched_logits(self, tiny_params, rng):
        h = encode_features(rng.normal(size=(3, 4)), tiny_params)
        logits = decoder_forward(h, np.array([[SOS_ID, 3, 4], [SOS_ID, 5, PAD_ID], [SOS_ID, PAD_ID, PAD_ID]]),
                                 tiny_params)
        assert logits.shape == (3, 3, 11)
        assert np.all(np.isfinite(logits.data))

    def test_unbatched_logits(self, tiny_params, rng):
        h = encode_features(rng.normal(size=4), tiny_params)
        logits = decoder_forward(h, [SOS_ID, 3], tiny_params)
        assert logits.shape == (2, 11)

    def test_invalid_token_id(self, tiny_params):
        with pytest.raises(CodecError):
            embed_tokens([SOS_ID, 11], tiny_params)

    def test_too_long_input(self, tiny_params):
        h = np.zeros((1, 8))
        with pytest.raises(ShapeError):
            decoder_forward(h, np.full((1, 8), 3), tiny_params)

    def test_prefix_logits_ignore_later_tokens(self, tiny_params, rng):
        h = encode_features(rng.normal(size=(1, 4)), tiny_params)
        first = decoder_forward(h, np.array([[SOS_ID, 3, 4, 5]]), tiny_params).data
        second = decoder_forward(h, np.array([[SOS_ID, 3, 9, 10]]), tiny_params).data
        np.testing.assert_allclose(first[0, :2], second[0, :2], rtol=0, atol=1e-12)
        assert not np.allclose(first[0, 2:], second[0, 2:])


def test_causal_mask_values():
    mask = causal_mask(3)
    assert mask[0, 0] == 0.0 and mask[2, 0] == 0.0
    assert mask[0, 1] == MASK_VALUE and mask[1, 2] == MASK_VALUE
    assert np.count_nonzero(mask) == 3


def test_gradient_never_reaches_later_positions(tiny_params, rng):
    length = 5
    h = Tensor(rng.normal(size=(1, 8)))
    for t in range(length):
        embeddings = parameter(rng.normal(size=(1, length, 8)))
        logits = decoder_forward_embeddings(h, embeddings, tiny_params)
        selector = np.zeros(logits.shape)
        selector[0, t] = rng.normal(size=logits.shape[-1])
        graph = (logits * selector).sum().backward()
        grad = graph.grad_of(embeddings)
        assert np.all(grad[0, t + 1:] == 0.0)
        assert np.any(grad[0, t] != 0.0)
        tiny_params.zero_grad()


def test_decoder_gradients_match_finite_differences(tiny_params, rng):
    h = rng.normal(size=(2, 8))
    ids = np.array([[SOS_ID, 3, 5], [SOS_ID, 6, PAD_ID]])
    weights = rng.normal(size=(2, 3, 11))
    params = tiny_params.parameters()
    error = grad_check(lambda: (decoder_forward(h, ids, tiny_params) * weights).sum(),
                       params, num_coords=150, seed=2)
    assert error < 1e-4


# =============================================================================
# Framing
# =============================================================================

class TestFrameBatch:
    def test_inputs_targets_and_mask(self):
        frame = frame_batch([[3, 4], [], [5]])
        np.testing.assert_array_equal(frame.input_ids, [[SOS_ID, 3, 4], [SOS_ID, 0, 0], [SOS_ID, 5, 0]])
        np.testing.assert_array_equal(frame.target_ids, [[3, 4, EOS_ID], [EOS_ID, 0, 0], [5, EOS_ID, 0]])
        np.testing.assert_array_equal(frame.target_mask.sum(axis=1), [3, 1, 2])
        assert frame.length == 3

    def test_explicit_length_pads(self):
        frame = frame_batch([[3]], length=4)
        np.testing.assert_array_equal(frame.target_ids, [[3, EOS_ID, PAD_ID, PAD_ID]])

    def test_length_too_short(self):
        with pytest.raises(ShapeError):
            frame_batch([[3, 4, 5]], length=2)
