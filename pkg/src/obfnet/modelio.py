"""Bit-exact model file format.

Layout (all integers little-endian):

    "ONET"            4-byte magic
    u16               format version (currently 1)
    u16 + bytes       architecture name (utf-8)
    u8 + rank * u32   network input shape
    u16               layer count
    per layer:
        u8            kind tag (see _TAGS)
        u8            trainable flag
        ...           fixed hyperparameter block per kind; real-valued
                      hyperparameters (dropout rate, batch-norm momentum
                      and epsilon) are stored as f32
        per tensor:   u8 rank, rank * u32 dims, raw f32 data
                      (fixed tensor list per kind; batch norm includes
                      its moving statistics)
    u32               CRC32 of every preceding byte

Files are written atomically (temp file + rename), so concurrent
readers never observe a partial model.
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
import tempfile
import zlib
from pathlib import Path

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
from .errors import ChecksumError, LayoutError, MagicError, NumericError, VersionError

MAGIC = b"ONET"
FORMAT_VERSION = 1

_PAD = {"valid": 0, "same": 1}
_PAD_BACK = {v: k for k, v in _PAD.items()}

_TAGS = {
    "dense": 1,
    "conv2d": 2,
    "maxpool2d": 3,
    "batchnorm": 4,
    "dropout": 5,
    "relu": 6,
    "softmax": 7,
    "flatten": 8,
    "reshape": 9,
}


def _write_tensor(buf, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    buf.write(struct.pack("<B", array.ndim))
    for dim in array.shape:
        buf.write(struct.pack("<I", dim))
    buf.write(array.tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise LayoutError(f"model file ends early at byte {self.pos} "
                              f"(needed {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values[0] if len(values) == 1 else values

    def tensor(self):
        rank = self.unpack("<B")
        shape = tuple(self.unpack("<I") for _ in range(rank))
        count = 1
        for d in shape:
            count *= d
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    def done(self):
        if self.pos != len(self.data):
            raise LayoutError(f"{len(self.data) - self.pos} trailing bytes "
                              f"after the last layer")


def _serialize_layer(buf, layer):
    buf.write(struct.pack("<BB", _TAGS[layer.kind], int(layer.trainable)))
    if layer.kind == "dense":
        buf.write(struct.pack("<II", layer.in_features, layer.out_features))
        _write_tensor(buf, layer.params["w"])
        _write_tensor(buf, layer.params["b"])
    elif layer.kind == "conv2d":
        buf.write(struct.pack("<IIIIIB", layer.in_channels, layer.out_channels,
                              layer.kh, layer.kw, layer.stride, _PAD[layer.padding]))
        _write_tensor(buf, layer.params["w"])
        _write_tensor(buf, layer.params["b"])
    elif layer.kind == "maxpool2d":
        buf.write(struct.pack("<IIIB", layer.ph, layer.pw, layer.stride,
                              _PAD[layer.padding]))
    elif layer.kind == "batchnorm":
        buf.write(struct.pack("<Iff", layer.channels, layer.momentum, layer.epsilon))
        _write_tensor(buf, layer.params["gamma"])
        _write_tensor(buf, layer.params["beta"])
        _write_tensor(buf, layer.moving_mean)
        _write_tensor(buf, layer.moving_var)
    elif layer.kind == "dropout":
        buf.write(struct.pack("<f", layer.rate))
    elif layer.kind == "reshape":
        buf.write(struct.pack("<B", len(layer.target_shape)))
        for dim in layer.target_shape:
            buf.write(struct.pack("<I", dim))
    elif layer.kind not in ("relu", "softmax", "flatten"):
        raise LayoutError(f"cannot serialize layer kind {layer.kind!r}")


def _deserialize_layer(reader: _Reader):
    tag, trainable = reader.unpack("<BB")
    kinds = {v: k for k, v in _TAGS.items()}
    if tag not in kinds:
        raise LayoutError(f"unknown layer tag {tag}")
    kind = kinds[tag]
    if kind == "dense":
        n_in, n_out = reader.unpack("<II")
        layer = Dense(n_in, n_out)
        layer.params["w"] = reader.tensor()
        layer.params["b"] = reader.tensor()
        _expect_shape(layer.params["w"], (n_in, n_out), "dense weight")
        _expect_shape(layer.params["b"], (n_out,), "dense bias")
    elif kind == "conv2d":
        in_ch, out_ch, kh, kw, stride, pad = reader.unpack("<IIIIIB")
        layer = Conv2D(in_ch, out_ch, (kh, kw), stride=stride,
                       padding=_pad_name(pad))
        layer.params["w"] = reader.tensor()
        layer.params["b"] = reader.tensor()
        _expect_shape(layer.params["w"], (out_ch, in_ch, kh, kw), "conv kernel")
        _expect_shape(layer.params["b"], (out_ch,), "conv bias")
    elif kind == "maxpool2d":
        ph, pw, stride, pad = reader.unpack("<IIIB")
        layer = MaxPool2D((ph, pw), stride=stride, padding=_pad_name(pad))
    elif kind == "batchnorm":
        channels, momentum, epsilon = reader.unpack("<Iff")
        layer = BatchNorm(channels, momentum=momentum, epsilon=epsilon)
        layer.params["gamma"] = reader.tensor()
        layer.params["beta"] = reader.tensor()
        layer.moving_mean = reader.tensor()
        layer.moving_var = reader.tensor()
        for name in ("gamma", "beta"):
            _expect_shape(layer.params[name], (channels,), f"batchnorm {name}")
        _expect_shape(layer.moving_mean, (channels,), "batchnorm moving_mean")
        _expect_shape(layer.moving_var, (channels,), "batchnorm moving_var")
    elif kind == "dropout":
        layer = Dropout(reader.unpack("<f"))
    elif kind == "reshape":
        rank = reader.unpack("<B")
        layer = Reshape(tuple(reader.unpack("<I") for _ in range(rank)))
    else:
        layer = {"relu": ReLU, "softmax": Softmax, "flatten": Flatten}[kind]()
    layer.trainable = bool(trainable)
    return layer


def _pad_name(code):
    if code not in _PAD_BACK:
        raise LayoutError(f"unknown padding code {code}")
    return _PAD_BACK[code]


def _expect_shape(array, shape, what):
    if array.shape != shape:
        raise LayoutError(f"{what} has shape {array.shape}, expected {shape}")


def dumps(net: Network) -> bytes:
    """Serialize a network to bytes (single-precision weights)."""
    for i, name, value in net.parameters():
        if not np.all(np.isfinite(value)):
            raise NumericError(f"layer {i} param {name!r} contains non-finite values")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    name = net.name.encode("utf-8")
    buf.write(struct.pack("<H", len(name)))
    buf.write(name)
    buf.write(struct.pack("<B", len(net.input_shape)))
    for dim in net.input_shape:
        buf.write(struct.pack("<I", dim))
    buf.write(struct.pack("<H", len(net.layers)))
    for layer in net.layers:
        _serialize_layer(buf, layer)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> Network:
    """Reconstruct a network; raises a distinct error per corruption mode."""
    if len(data) < len(MAGIC) + 2 + 4:
        raise LayoutError(f"model data too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise MagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack("<H", data[4:6])[0]
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version} "
                           f"(supported: {FORMAT_VERSION})")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise ChecksumError(f"CRC mismatch: stored 0x{stored_crc:08x}, "
                            f"computed 0x{actual_crc:08x}")
    reader = _Reader(data[:-4])
    reader.take(6)  # magic + version already validated
    name_len = reader.unpack("<H")
    name = reader.take(name_len).decode("utf-8")
    rank = reader.unpack("<B")
    input_shape = tuple(reader.unpack("<I") for _ in range(rank))
    n_layers = reader.unpack("<H")
    layers = [_deserialize_layer(reader) for _ in range(n_layers)]
    reader.done()
    return Network(layers, input_shape=input_shape, name=name)


def save(net: Network, path) -> int:
    """Atomically write the model file; returns the byte count."""
    data = dumps(net)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(data)


def load(path) -> Network:
    return loads(Path(path).read_bytes())


def checksum(data_or_path) -> str:
    """SHA-256 hex digest of a file or byte string."""
    if isinstance(data_or_path, (bytes, bytearray)):
        data = bytes(data_or_path)
    else:
        data = Path(data_or_path).read_bytes()
    return hashlib.sha256(data).hexdigest()


def weights_digest(net: Network) -> str:
    """SHA-256 over just the weight and state tensor bytes.

    Independent of trainable flags, so a frozen copy of a network has
    the same digest as the original.
    """
    digest = hashlib.sha256()
    for layer in net.layers:
        for name in sorted(layer.params):
            digest.update(np.ascontiguousarray(layer.params[name], dtype="<f4").tobytes())
        for name in sorted(layer.state_arrays()):
            digest.update(np.ascontiguousarray(
                layer.state_arrays()[name], dtype="<f4").tobytes())
    return digest.hexdigest()


def transfer_time(size_bytes, rate_bits_per_second) -> float:
    """Seconds to push size_bytes through a link of the given bit rate."""
    if rate_bits_per_second <= 0:
        raise ValueError(f"rate must be positive, got {rate_bits_per_second}")
    if size_bytes < 0:
        raise ValueError(f"size must be non-negative, got {size_bytes}")
    return size_bytes * 8.0 / rate_bits_per_second
