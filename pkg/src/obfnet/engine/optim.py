"""Optimizers: AdaDelta (default) and plain SGD.

Both step over a Network's trainable layers, reading the gradients left
behind by backward().  Frozen layers are skipped entirely, so their
weights can never drift.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, StateError


class AdaDelta:
    """Adaptive per-parameter step sizes from running squared averages.

    acc_g  <- rho * acc_g + (1 - rho) * g^2
    delta  =  -sqrt(acc_u + eps) / sqrt(acc_g + eps) * g
    acc_u  <- rho * acc_u + (1 - rho) * delta^2
    weight <- weight + lr * delta
    """

    def __init__(self, rho=0.95, epsilon=1e-6, learning_rate=1.0):
        self.rho = float(rho)
        self.epsilon = float(epsilon)
        self.learning_rate = float(learning_rate)
        self._state = {}

    def _slot(self, key, param):
        if key not in self._state:
            self._state[key] = (np.zeros_like(param), np.zeros_like(param))
        acc_g, acc_u = self._state[key]
        if acc_g.shape != param.shape:
            raise StateError(f"optimizer state shape {acc_g.shape} does not "
                             f"match parameter {param.shape} for {key}")
        return acc_g, acc_u

    def step(self, net):
        rho = self.rho
        eps = self.epsilon
        for i, layer in enumerate(net.layers):
            if not layer.trainable or not layer.params:
                continue
            for name, w in layer.params.items():
                if name not in layer.grads:
                    raise StateError(f"no gradient for layer {i} ({layer.kind}) "
                                     f"param {name!r}; run backward() first")
                g = layer.grads[name]
                if not np.all(np.isfinite(g)):
                    raise NumericError(
                        f"non-finite gradient in layer {i} ({layer.kind}) param {name!r}")
                acc_g, acc_u = self._slot((i, name), w)
                acc_g *= rho
                acc_g += (1.0 - rho) * g * g
                delta = -np.sqrt(acc_u + eps) / np.sqrt(acc_g + eps) * g
                acc_u *= rho
                acc_u += (1.0 - rho) * delta * delta
                w += self.learning_rate * delta


class SGD:
    """Stochastic gradient descent with optional momentum."""

    def __init__(self, learning_rate=0.1, momentum=0.0):
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self._velocity = {}

    def step(self, net):
        for i, layer in enumerate(net.layers):
            if not layer.trainable or not layer.params:
                continue
            for name, w in layer.params.items():
                if name not in layer.grads:
                    raise StateError(f"no gradient for layer {i} ({layer.kind}) "
                                     f"param {name!r}; run backward() first")
                g = layer.grads[name]
                if not np.all(np.isfinite(g)):
                    raise NumericError(
                        f"non-finite gradient in layer {i} ({layer.kind}) param {name!r}")
                if self.momentum:
                    v = self._velocity.setdefault((i, name), np.zeros_like(w))
                    v *= self.momentum
                    v -= self.learning_rate * g
                    w += v
                else:
                    w -= self.learning_rate * g


def make_optimizer(name, **kwargs):
    name = name.lower()
    if name == "adadelta":
        allowed = {k: v for k, v in kwargs.items()
                   if k in ("rho", "epsilon", "learning_rate")}
        return AdaDelta(**allowed)
    if name == "sgd":
        allowed = {k: v for k, v in kwargs.items()
                   if k in ("learning_rate", "momentum")}
        return SGD(**allowed)
    raise ValueError(f"unknown optimizer {name!r} (expected 'adadelta' or 'sgd')")
