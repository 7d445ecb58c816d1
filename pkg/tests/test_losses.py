"""Cross-entropy loss values and gradients."""

import math

import numpy as np
import pytest

from obfnet.engine import Network, Dense, Softmax, cross_entropy, softmax_cross_entropy_grad
from obfnet.engine.losses import PROB_FLOOR
from obfnet.errors import DataError


def test_uniform_probs_loss_is_ln_num_classes():
    probs = np.full((4, 10), 0.1, dtype=np.float32)
    loss, _ = cross_entropy(probs, np.array([0, 3, 5, 9]))
    assert abs(loss - math.log(10)) < 1e-6


def test_one_hot_probs_loss_is_zero():
    probs = np.eye(5, dtype=np.float32)[[0, 2, 4]]
    loss, _ = cross_entropy(probs, np.array([0, 2, 4]))
    assert loss <= 1e-6


def test_zero_probability_is_clipped_to_finite_loss():
    probs = np.zeros((1, 3), dtype=np.float32)
    probs[0, 1] = 1.0
    loss, grad = cross_entropy(probs, np.array([0]))
    assert np.isfinite(loss)
    assert abs(loss - (-math.log(PROB_FLOOR))) < 1e-4
    assert np.all(np.isfinite(grad))


def test_label_out_of_range_rejected():
    probs = np.full((2, 4), 0.25, dtype=np.float32)
    with pytest.raises(DataError):
        cross_entropy(probs, np.array([0, 4]))
    with pytest.raises(DataError):
        cross_entropy(probs, np.array([-1, 0]))


def test_fused_gradient_formula():
    probs = np.array([[0.2, 0.5, 0.3], [0.6, 0.3, 0.1]], dtype=np.float32)
    labels = np.array([1, 0])
    grad = softmax_cross_entropy_grad(probs, labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(2), labels] = 1.0
    assert np.allclose(grad, (probs - onehot) / 2)


def test_grad_through_softmax_equals_fused_logit_grad():
    rng = np.random.default_rng(0)
    net = Network([Dense(6, 4), Softmax()], input_shape=(6,), rng=rng).astype(np.float64)
    x = rng.normal(size=(5, 6))
    y = np.array([0, 1, 2, 3, 0])
    probs = net.forward(x, training=True)
    _, dprobs = cross_entropy(probs, y)
    net.backward(dprobs)
    generic = net.layers[0].grads["w"].copy()
    probs = net.forward(x, training=True)
    net.backward(softmax_cross_entropy_grad(probs, y), fused_softmax=True)
    fused = net.layers[0].grads["w"].copy()
    assert np.allclose(generic, fused, atol=1e-12)
