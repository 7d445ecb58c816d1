"""obfnet: input obfuscation for remote neural-network inference.

A backend serves a frozen inference net over a binary protocol; edge
devices may push samples through a small obfuscation net first.  The
obfuscators are trained concatenated in front of the frozen classifier
so that obfuscated samples keep their labels while losing their raw
form.  The package bundles the training engine, the named model
architectures, data pipelines, bit-exact model files, the wire
protocol, obfuscation-quality metrics, and a benchmark harness.
"""

from . import bench, data, engine, metrics, modelio, protocol, zoo
from .errors import ObfnetError
from .manifest import ManifestEntry, ObfSetManifest
from .training import (
    ConcatenatedModel,
    TrainConfig,
    TrainingReport,
    evaluate,
    generate_obfnet_set,
    train_infnet,
    train_obfnet,
)

__version__ = "0.1.0"

__all__ = [
    "ConcatenatedModel",
    "ManifestEntry",
    "ObfSetManifest",
    "ObfnetError",
    "TrainConfig",
    "TrainingReport",
    "bench",
    "data",
    "engine",
    "evaluate",
    "generate_obfnet_set",
    "metrics",
    "modelio",
    "protocol",
    "train_infnet",
    "train_obfnet",
    "zoo",
]
