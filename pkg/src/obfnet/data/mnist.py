"""IDX file parsing for the MNIST layout (plus a writer for fixtures).

IDX is big-endian: u32 magic, u32 count, then for images u32 rows and
u32 cols followed by count*rows*cols unsigned bytes.  Magic 0x00000803
marks image files, 0x00000801 label files.  Gzipped files are handled
transparently.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .dataset import Dataset, SplitDataset

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

_FILE_STEMS = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

VALIDATION_FRACTION = 0.1


def _read_bytes(path: Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx_images(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise DataError(f"{path}: truncated IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise DataError(f"{path}: bad IDX image magic 0x{magic:08x} "
                        f"(expected 0x{IMAGE_MAGIC:08x})")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {count} images "
                        f"of {rows}x{cols}, found {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return data.reshape(count, rows, cols)


def read_idx_labels(path, num_classes=10) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise DataError(f"{path}: truncated IDX label header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise DataError(f"{path}: bad IDX label magic 0x{magic:08x} "
                        f"(expected 0x{LABEL_MAGIC:08x})")
    if len(raw) != 8 + count:
        raise DataError(f"{path}: expected {8 + count} bytes for {count} labels, "
                        f"found {len(raw)}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size and labels.max() >= num_classes:
        raise DataError(f"{path}: label {labels.max()} out of range [0, {num_classes})")
    return labels.astype(np.int64)


def write_idx_images(path, images):
    images = np.asarray(images)
    if images.dtype != np.uint8:
        raise DataError("IDX images must be uint8")
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def _find(directory: Path, stem: str) -> Path:
    # tolerate the two naming conventions in the wild plus gzip
    candidates = [stem, stem.replace("-idx", ".idx"), stem + ".gz",
                  stem.replace("-idx", ".idx") + ".gz"]
    for name in candidates:
        p = directory / name
        if p.exists():
            return p
    raise DataError(f"missing IDX file {stem} (or .gz) in {directory}")


def load_mnist(directory, num_classes=10) -> SplitDataset:
    """Load the four standard IDX files and carve a validation split.

    Pixels are scaled to [0, 1].  The last 10% of the training images
    become the validation set (deterministic, no shuffling), which for
    the real dataset yields the 54,000/6,000/10,000 partition.
    """
    directory = Path(directory)
    train_x = read_idx_images(_find(directory, _FILE_STEMS["train_images"]))
    train_y = read_idx_labels(_find(directory, _FILE_STEMS["train_labels"]), num_classes)
    test_x = read_idx_images(_find(directory, _FILE_STEMS["test_images"]))
    test_y = read_idx_labels(_find(directory, _FILE_STEMS["test_labels"]), num_classes)
    if train_x.shape[0] != train_y.shape[0]:
        raise DataError(f"train images ({train_x.shape[0]}) and labels "
                        f"({train_y.shape[0]}) count mismatch")
    if test_x.shape[0] != test_y.shape[0]:
        raise DataError(f"test images ({test_x.shape[0]}) and labels "
                        f"({test_y.shape[0]}) count mismatch")

    def to_float(images):
        return (images.astype(np.float32) / 255.0)

    n_val = int(train_x.shape[0] * VALIDATION_FRACTION)
    n_train = train_x.shape[0] - n_val
    train = Dataset(to_float(train_x[:n_train]), train_y[:n_train], num_classes)
    val = Dataset(to_float(train_x[n_train:]), train_y[n_train:], num_classes)
    test = Dataset(to_float(test_x), test_y, num_classes)
    return SplitDataset(train, val, test)
