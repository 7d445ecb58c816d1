"""Named network architectures and parameter counting.

Families:
  fsd-*    spoken-digit nets over 20x45 MFCC images
  mnist-*  handwritten-digit nets over 28x28 images
  *-ic     convolutional inference net
  *-im     dense inference net
  *-oc     convolutional obfuscator (output shape == input shape)
  *-om     dense obfuscator (output shape == input shape)

The MNIST obfuscators take a configurable first-hidden-layer width; the
widths studied in the scaling sweep are in MNIST_WIDTH_SWEEP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    Network,
    ReLU,
    Reshape,
    Softmax,
)
from .errors import ShapeError

ARCH_NAMES = (
    "fsd-ic", "fsd-im", "fsd-oc", "fsd-om",
    "mnist-ic", "mnist-im", "mnist-oc", "mnist-om",
)

MNIST_WIDTH_SWEEP = (8, 16, 32, 64, 128, 256, 512)

_DEFAULT_INPUT = {"fsd": (20, 45), "mnist": (28, 28)}


@dataclass
class ArchSpec:
    name: str
    hidden_width: int | None = None
    input_shape: tuple | None = None
    num_classes: int = 10

    def __post_init__(self):
        if self.name not in ARCH_NAMES:
            raise ShapeError(f"unknown architecture {self.name!r}; "
                             f"expected one of {', '.join(ARCH_NAMES)}")
        family = self.name.split("-")[0]
        if self.input_shape is None:
            self.input_shape = _DEFAULT_INPUT[family]
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if self.name in ("mnist-om", "mnist-oc"):
            if self.hidden_width is None:
                self.hidden_width = 128
            if self.hidden_width < 1:
                raise ShapeError(f"hidden_width must be positive, got {self.hidden_width}")
        if self.num_classes < 2:
            raise ShapeError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def is_obfuscator(self):
        return self.name.endswith("-oc") or self.name.endswith("-om")


def _flat_size(shape):
    return int(np.prod(shape))


def _fsd_ic(spec):
    return [
        Conv2D(1, 32, (2, 2), stride=1, padding="same"), ReLU(),
        Conv2D(32, 48, (3, 3), stride=1, padding="same"), ReLU(),
        Conv2D(48, 64, (3, 6), stride=1, padding="same"), ReLU(),
        MaxPool2D((2, 2), stride=2, padding="same"),
        Dropout(0.25),
        Flatten(),
        Dense(64 * -(-spec.input_shape[0] // 2) * -(-spec.input_shape[1] // 2), 128), ReLU(),
        Dropout(0.1),
        Dense(128, 64), ReLU(),
        Dropout(0.25),
        Dense(64, spec.num_classes),
        Softmax(),
    ]


def _fsd_im(spec):
    flat = _flat_size(spec.input_shape)
    return [
        Flatten(),
        Dense(flat, 800), ReLU(), Dropout(0.15),
        Dense(800, 300), ReLU(), Dropout(0.15),
        Dense(300, 128), ReLU(), Dropout(0.1),
        Dense(128, 64), ReLU(), Dropout(0.25),
        Dense(64, spec.num_classes),
        Softmax(),
    ]


def _fsd_oc(spec):
    h, w = spec.input_shape
    pooled = -(-h // 2) * -(-w // 2) * 5
    return [
        Conv2D(1, 3, (2, 4), stride=1, padding="same"), ReLU(), BatchNorm(3),
        Conv2D(3, 5, (3, 6), stride=1, padding="same"), ReLU(), BatchNorm(5),
        MaxPool2D((2, 2), stride=2, padding="same"),
        Dropout(0.25),
        Flatten(),
        Dense(pooled, h * w), ReLU(),
        Dropout(0.15),
        Reshape((h, w)),
    ]


def _fsd_om(spec):
    h, w = spec.input_shape
    flat = h * w
    return [
        Flatten(),
        Dense(flat, 200), ReLU(), BatchNorm(200),
        Dense(200, flat), ReLU(), BatchNorm(flat),
        Reshape((h, w)),
    ]


def _mnist_ic(spec):
    h, w = spec.input_shape
    ch, cw = h - 4, w - 4          # after two valid 3x3 convolutions
    ph, pw = (ch - 2) // 2 + 1, (cw - 2) // 2 + 1
    return [
        Conv2D(1, 32, (3, 3), stride=1, padding="valid"), ReLU(),
        Conv2D(32, 64, (3, 3), stride=1, padding="valid"), ReLU(),
        MaxPool2D((2, 2), stride=2, padding="valid"),
        Dropout(0.25),
        Flatten(),
        Dense(64 * ph * pw, 128), ReLU(),
        Dropout(0.5),
        Dense(128, spec.num_classes),
        Softmax(),
    ]


def _mnist_im(spec):
    flat = _flat_size(spec.input_shape)
    return [
        Flatten(),
        Dense(flat, 512), ReLU(),
        Dense(512, 512), ReLU(),
        Dense(512, 512), ReLU(),
        Dense(512, spec.num_classes),
        Softmax(),
    ]


def _mnist_om(spec):
    h, w = spec.input_shape
    flat = h * w
    return [
        Flatten(),
        Dense(flat, spec.hidden_width), ReLU(),
        Dense(spec.hidden_width, flat), ReLU(),
        Reshape((h, w)),
    ]


def _mnist_oc(spec):
    h, w = spec.input_shape
    ch, cw = h - 2, w - 2                       # valid 3x3 convolution
    ph, pw = (ch - 2) // 2 + 1, (cw - 2) // 2 + 1
    return [
        Conv2D(1, 32, (3, 3), stride=1, padding="valid"), ReLU(),
        MaxPool2D((2, 2), stride=2, padding="valid"),
        Dropout(0.25),
        Flatten(),
        Dense(32 * ph * pw, spec.hidden_width), ReLU(),
        Dense(spec.hidden_width, h * w), ReLU(),
        Reshape((h, w)),
    ]


_BUILDERS = {
    "fsd-ic": _fsd_ic,
    "fsd-im": _fsd_im,
    "fsd-oc": _fsd_oc,
    "fsd-om": _fsd_om,
    "mnist-ic": _mnist_ic,
    "mnist-im": _mnist_im,
    "mnist-oc": _mnist_oc,
    "mnist-om": _mnist_om,
}


def build(spec: ArchSpec, seed=0) -> Network:
    """Construct a named architecture with Glorot-uniform weights."""
    if isinstance(spec, str):
        spec = ArchSpec(spec)
    layers = _BUILDERS[spec.name](spec)
    rng = np.random.default_rng(seed)
    net = Network(layers, input_shape=spec.input_shape, name=spec.name, rng=rng)
    if spec.is_obfuscator and net.output_shape != net.input_shape:
        raise ShapeError(f"{spec.name}: obfuscator output shape {net.output_shape} "
                         f"differs from input shape {net.input_shape}")
    return net


def count_params(net: Network, include_stats=False) -> int:
    """Total weight elements, trainable and frozen alike.

    Batch-norm moving statistics are excluded unless include_stats is set.
    """
    total = sum(v.size for _, _, v in net.parameters())
    if include_stats:
        for layer in net.layers:
            total += sum(a.size for a in layer.state_arrays().values())
    return int(total)
