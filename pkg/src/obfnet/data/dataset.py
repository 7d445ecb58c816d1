"""Dataset containers and deterministic splitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class Dataset:
    """Samples with integer class labels.

    samples: (N, *sample_shape) float32
    labels:  (N,) integer class indices in [0, num_classes)
    """

    samples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or self.samples.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"samples ({self.samples.shape[0]}) and labels "
                f"({self.labels.shape[0] if self.labels.ndim == 1 else self.labels.shape}) "
                f"do not line up")
        if self.labels.size:
            lo, hi = int(self.labels.min()), int(self.labels.max())
            if lo < 0 or hi >= self.num_classes:
                raise DataError(f"label out of range [0, {self.num_classes}): "
                                f"found {lo}..{hi}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def sample_shape(self):
        return self.samples.shape[1:]

    def subset(self, indices):
        return Dataset(self.samples[indices], self.labels[indices], self.num_classes)


@dataclass
class SplitDataset:
    """Train/validation/test triple, plus loader bookkeeping."""

    train: Dataset
    validation: Dataset
    test: Dataset
    skipped_files: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def split_dataset(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed=0, stratified=True):
    """Deterministic seeded split into train/validation/test.

    Stratified by label (per-class proportional allocation); the three
    parts are disjoint and cover the dataset.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise DataError(f"fractions must be three values summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    n = len(ds)
    train_idx, val_idx, test_idx = [], [], []
    if stratified:
        groups = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]
    else:
        groups = [np.arange(n)]
    for idx in groups:
        idx = rng.permutation(idx)
        m = idx.size
        n_val = int(round(m * fractions[1]))
        n_test = int(round(m * fractions[2]))
        n_train = m - n_val - n_test
        train_idx.append(idx[:n_train])
        val_idx.append(idx[n_train:n_train + n_val])
        test_idx.append(idx[n_train + n_val:])
    parts = []
    for chunk in (train_idx, val_idx, test_idx):
        merged = np.concatenate(chunk) if chunk else np.zeros(0, dtype=np.int64)
        parts.append(rng.permutation(merged))
    return SplitDataset(*(ds.subset(p) for p in parts))
