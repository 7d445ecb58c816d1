from .gradcheck import GradCheckReport, gradient_check
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    ReLU,
    Reshape,
    Softmax,
)
from .losses import cross_entropy, softmax_cross_entropy_grad
from .network import Network
from .optim import AdaDelta, SGD, make_optimizer

__all__ = [
    "AdaDelta",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "GradCheckReport",
    "Layer",
    "MaxPool2D",
    "Network",
    "ReLU",
    "Reshape",
    "SGD",
    "Softmax",
    "cross_entropy",
    "gradient_check",
    "make_optimizer",
    "softmax_cross_entropy_grad",
]
