# tests/test_autodiff.py
# -*- coding: utf-8 -*-
"""Tensor operations, their gradients and graph bookkeeping."""

import math

import numpy as np
import pytest

from genreg.autodiff import (
    Tensor,
    bce_with_logits,
    concat,
    cross_entropy,
    gather_last,
    huber_elementwise,
    layer_norm,
    log_softmax,
    matmul,
    no_grad,
    parameter,
    relu,
    sigmoid,
    softmax,
    take_rows,
    where,
)
from genreg.errors import GraphError, ShapeError
from genreg.gradcheck import grad_check


# =============================================================================
# Forward values
# =============================================================================

class TestMatmul:
    def test_identity(self):
        out = matmul(np.eye(2), [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_inner_product(self):
        assert matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]

    def test_matches_triple_loop(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        expected = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(matmul(a, b).data, expected, atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]).data, [1 / 3] * 3, atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        out = softmax([1000.0, 0.0]).data
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0, abs=1e-300)

    def test_matches_direct_formula(self):
        x = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(softmax(x).data, np.exp(x) / np.exp(x).sum(), atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        out = softmax(rng.normal(size=(5, 7)) * 10, axis=-1).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)

    def test_log_softmax_consistent(self, rng):
        x = rng.normal(size=(3, 4))
        np.testing.assert_allclose(np.exp(log_softmax(x).data), softmax(x).data, atol=1e-12)


class TestLayerNorm:
    def test_constant_row_collapses_to_beta(self):
        out = layer_norm([1.0, 1.0, 1.0], np.ones(3), np.zeros(3)).data
        np.testing.assert_allclose(out, [0.0, 0.0, 0.0], atol=1e-12)

    def test_already_normalized(self):
        out = layer_norm([-1.0, 1.0], np.ones(2), np.zeros(2)).data
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-4)

    def test_random_row_statistics(self, rng):
        out = layer_norm(rng.normal(size=16) * 3 + 2, np.ones(16), np.zeros(16)).data
        assert abs(out.mean()) < 1e-9
        assert abs(out.var() - 1.0) < 1e-5


class TestCrossEntropy:
    def test_confident_correct_is_zero(self):
        assert cross_entropy([0.0, 100.0, 0.0], 1).item() == pytest.approx(0.0, abs=1e-12)

    def test_uniform_is_log_v(self):
        assert cross_entropy(np.zeros(7), 3).item() == pytest.approx(math.log(7))

    def test_two_class_values(self):
        # ln(1 + e^-1) for the larger logit, ln(1 + e^1) for the smaller.
        assert cross_entropy([1.0, 2.0], 1).item() == pytest.approx(0.3132617, abs=1e-6)
        assert cross_entropy([1.0, 2.0], 0).item() == pytest.approx(1.3132617, abs=1e-6)

    def test_per_position_values(self):
        out = cross_entropy(np.zeros((2, 3, 4)), np.zeros((2, 3), dtype=int))
        assert out.shape == (2, 3)
        np.testing.assert_allclose(out.data, math.log(4))

    def test_index_out_of_range(self):
        with pytest.raises(ShapeError):
            cross_entropy([1.0, 2.0], 2)

    def test_bad_target_shape(self):
        with pytest.raises(ShapeError):
            cross_entropy(np.zeros((2, 3)), [0, 1, 2])


def test_huber_regions():
    out = huber_elementwise([0.5, 3.0, -3.0], [0.0, 0.0, 0.0], delta=1.0).data
    np.testing.assert_allclose(out, [0.125, 2.5, 2.5])


@pytest.mark.parametrize("delta", [1.0, 0.3])
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_huber_gradient_continuous_at_delta(delta, sign):
    residuals = parameter(sign * np.array([delta - 1e-6, delta + 1e-6]))
    huber_elementwise(residuals, np.zeros(2), delta=delta).sum().backward()
    inside, outside = residuals.grad
    assert inside == pytest.approx(outside, abs=1e-5)
    assert outside == pytest.approx(sign * delta)


def test_bce_matches_formula():
    logits = np.array([-30.0, -1.0, 0.0, 2.0, 30.0])
    labels = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
    p = 1.0 / (1.0 + np.exp(-logits))
    expected = -(labels * np.log(np.clip(p, 1e-300, None)) + (1 - labels) * np.log(np.clip(1 - p, 1e-300, None)))
    np.testing.assert_allclose(bce_with_logits(logits, labels).data, expected, rtol=1e-9, atol=1e-12)


def test_sigmoid_extremes():
    out = sigmoid([-800.0, 0.0, 800.0]).data
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


def test_forward_is_bit_identical(rng):
    x = rng.normal(size=(4, 6))
    w = rng.normal(size=(6, 5))
    first = softmax(relu(matmul(x, w)), axis=-1).data
    second = softmax(relu(matmul(x, w)), axis=-1).data
    assert np.array_equal(first, second)


# =============================================================================
# Backward
# =============================================================================

class TestBackward:
    def test_product_rule(self):
        x, y = parameter(2.0), parameter(3.0)
        (x * y).backward()
        assert x.grad == pytest.approx(3.0)
        assert y.grad == pytest.approx(2.0)

    def test_dead_relu(self):
        w = parameter(4.0)
        (relu(Tensor(-5.0)) * w).backward()
        assert w.grad == pytest.approx(0.0)

    def test_non_scalar_loss_rejected(self):
        x = parameter(np.ones(3))
        with pytest.raises(GraphError):
            (x * 2.0).backward()

    def test_repeated_backward_rejected(self):
        x = parameter(2.0)
        loss = x * x
        loss.backward()
        with pytest.raises(GraphError):
            loss.backward()

    def test_shared_node_accumulates(self):
        x = parameter(3.0)
        y = x * x
        (y + y).backward()
        assert x.grad == pytest.approx(12.0)

    def test_graph_exposes_intermediate_gradients(self):
        x = parameter(np.array([1.0, 2.0]))
        hidden = x * 3.0
        graph = hidden.sum().backward()
        np.testing.assert_allclose(graph.grad_of(hidden), [1.0, 1.0])
        np.testing.assert_allclose(x.grad, [3.0, 3.0])

    def test_gradient_shapes_match_values(self, rng):
        w = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(4,)))
        (matmul(rng.normal(size=(5, 3)), w) + b).sum().backward()
        assert w.grad.shape == w.shape
        assert b.grad.shape == b.shape
        np.testing.assert_allclose(b.grad, np.full(4, 5.0))

    def test_no_grad_records_nothing(self):
        x = parameter(2.0)
        with no_grad():
            y = x * x
        assert not y.requires_grad
        assert y.is_leaf

    def test_embedding_lookup_accumulates_repeated_rows(self):
        table = parameter(np.arange(6.0).reshape(3, 2))
        take_rows(table, [0, 2, 0]).sum().backward()
        np.testing.assert_allclose(table.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


# =============================================================================
# Finite-difference checks per operation
# =============================================================================

def _check(f, params):
    return grad_check(f, params, num_coords=100, seed=1)


class TestGradcheck:
    def test_quadratic(self):
        w = parameter(3.0)
        assert grad_check(lambda: w * w, [w]) < 1e-8

    def test_matmul_and_relu(self, rng):
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(4, 5)))
        assert _check(lambda: (relu(matmul(a, b)) ** 2.0).sum(), [a, b]) < 1e-4

    def test_softmax_weighted(self, rng):
        x = parameter(rng.normal(size=(2, 5)))
        weights = rng.normal(size=(2, 5))
        assert _check(lambda: (softmax(x, axis=-1) * weights).sum(), [x]) < 1e-4

    def test_layer_norm(self, rng):
        x = parameter(rng.normal(size=(3, 6)))
        gamma = parameter(rng.normal(size=6))
        beta = parameter(rng.normal(size=6))
        weights = rng.normal(size=(3, 6))
        assert _check(lambda: (layer_norm(x, gamma, beta) * weights).sum(), [x, gamma, beta]) < 1e-4

    def test_cross_entropy(self, rng):
        logits = parameter(rng.normal(size=(2, 3, 5)))
        targets = rng.integers(0, 5, size=(2, 3))
        assert _check(lambda: cross_entropy(logits, targets).mean(), [logits]) < 1e-4

    def test_huber_and_division(self, rng):
        pred = parameter(rng.normal(size=8) * 2)
        scale = parameter(rng.uniform(1.0, 2.0, size=8))
        target = rng.normal(size=8)
        assert _check(lambda: huber_elementwise(pred / scale, target, 1.0).sum(), [pred, scale]) < 1e-4

    def test_bce_sigmoid_exp_log(self, rng):
        logits = parameter(rng.normal(size=6))
        labels = (rng.uniform(size=6) > 0.5).astype(float)

        def f():
            return bce_with_logits(logits, labels).sum() + (sigmoid(logits).exp() + 1.0).log().sum()

        assert _check(f, [logits]) < 1e-4

    def test_gather_where_concat(self, rng):
        x = parameter(rng.normal(size=(3, 5)))
        y = parameter(rng.normal(size=(2, 5)))
        index = np.array([[0, 2], [4, 4], [1, 3]])
        cond = np.array([[True, False], [False, True], [True, True]])

        def f():
            picked = where(cond, gather_last(x, index), -1.0)
            stacked = concat([x, y], axis=0)
            return (picked ** 2.0).sum() + (stacked.transpose() @ stacked).sum() * 0.1

        assert _check(f, [x, y]) < 1e-4
