"""Sequential network container with construction-time shape checking."""

from __future__ import annotations

import copy

import numpy as np

from ..errors import ShapeError, StateError
from .layers import Dropout, Layer


class Network:
    """An ordered stack of layers with a fixed per-sample input shape.

    Mode is an argument of each forward pass, not stored state: in
    inference mode dropout is the identity and batch norm uses its moving
    statistics, and no layer state is written, so concurrent readers are
    safe.  Training-mode passes cache activations for backward() and
    require exclusive access.
    """

    def __init__(self, layers, input_shape, name="", rng=None, dtype=np.float32):
        self.layers: list[Layer] = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.name = name
        self.dtype = np.dtype(dtype)
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        self.layer_shapes = shapes
        if rng is not None:
            self.init_params(rng)

    @property
    def output_shape(self):
        return self.layer_shapes[-1]

    def init_params(self, rng):
        for layer in self.layers:
            layer.init_params(rng)

    def _check_batch(self, x):
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"batch shape {x.shape} does not match input shape "
                f"(N, {', '.join(map(str, self.input_shape))})")
        if x.shape[0] < 1:
            raise ShapeError("batch must contain at least one sample")

    def forward(self, x, training=False, rng=None):
        x = np.ascontiguousarray(x, dtype=self.dtype)
        self._check_batch(x)
        if training and rng is None and any(
                isinstance(l, Dropout) and l.rate > 0 for l in self.layers):
            raise StateError("training-mode forward through dropout requires rng=")
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, grad_out, fused_softmax=False):
        """Propagate a loss gradient; fills each layer's ``grads``.

        With ``fused_softmax=True`` the gradient is taken w.r.t. the
        pre-softmax logits and the trailing softmax layer is skipped
        (its cached forward is discarded).
        """
        grad = np.asarray(grad_out, dtype=self.dtype)
        layers = self.layers
        if fused_softmax:
            if not layers or layers[-1].kind != "softmax":
                raise StateError("fused_softmax backward requires a trailing softmax layer")
            layers[-1]._take_cache()
            layers = layers[:-1]
        for layer in reversed(layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        """Yield (layer_index, param_name, array) for every weight tensor."""
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield i, name, value

    def param_vector(self):
        parts = [v.ravel() for _, _, v in self.parameters()]
        if not parts:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate(parts)

    def freeze(self):
        for layer in self.layers:
            layer.trainable = False
        return self

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()
            layer.grads = {}

    def copy(self):
        self.clear_caches()
        return copy.deepcopy(self)

    def astype(self, dtype):
        """Deep copy with all arrays cast (used for double-precision checks)."""
        net = self.copy()
        net.dtype = np.dtype(dtype)
        for layer in net.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            for name, value in layer.state_arrays().items():
                setattr(layer, name, value.astype(dtype))
        return net

    def snapshot(self):
        """Copies of all weight and state arrays, for checkpointing."""
        return [
            ({k: v.copy() for k, v in layer.params.items()},
             {k: v.copy() for k, v in layer.state_arrays().items()})
            for layer in self.layers
        ]

    def restore(self, snapshot):
        for layer, (params, state) in zip(self.layers, snapshot):
            layer.params = {k: v.copy() for k, v in params.items()}
            for name, value in state.items():
                setattr(layer, name, value.copy())

    def __repr__(self):
        inner = ", ".join(layer.kind for layer in self.layers)
        return f"Network({self.name or 'unnamed'}: {inner})"
