"""Deterministic synthetic fixtures for tests and offline runs.

Two generators:
  * Gaussian class blobs in sample space (separable by construction),
    shaped like either dataset family.
  * Tone-mixture WAV files whose MFCC images are separable by class,
    for driving the audio pipeline end to end without real recordings.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataError
from .dataset import Dataset
from .mfcc import write_wav

FIXTURE_SHAPES = {"mnist-like": (28, 28), "fsd-like": (20, 45)}

BLOB_NOISE_SIGMA = 0.05


def synth_fixture(kind, classes=3, per_class=100, seed=0) -> Dataset:
    """Gaussian blobs: one mean pattern per class plus pixel noise.

    Class means are drawn uniformly in [0.2, 0.8] per pixel, so in
    sample space any two means are far apart relative to the noise
    (pairwise distance is many sigma for these shapes) and a linear
    classifier separates the classes.
    """
    if kind not in FIXTURE_SHAPES:
        raise DataError(f"unknown fixture kind {kind!r}; "
                        f"expected one of {sorted(FIXTURE_SHAPES)}")
    if classes < 2:
        raise DataError("synthetic fixtures need at least 2 classes")
    shape = FIXTURE_SHAPES[kind]
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.2, 0.8, size=(classes,) + shape)
    labels = np.repeat(np.arange(classes), per_class)
    labels = rng.permutation(labels)
    noise = rng.normal(0.0, BLOB_NOISE_SIGMA, size=(labels.size,) + shape)
    samples = np.clip(means[labels] + noise, 0.0, 1.0).astype(np.float32)
    return Dataset(samples, labels, classes)


def synth_wav_dir(directory, classes=3, per_class=20, seed=0,
                  sample_rate=8000, duration=0.5):
    """Write labeled tone-mixture WAVs named ``<label>_synth_<i>.wav``.

    Each class gets a distinct fundamental; recordings vary in phase,
    amplitude and additive noise so the task is non-trivial but cleanly
    separable in MFCC space.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(sample_rate * duration)
    t = np.arange(n) / sample_rate
    written = []
    for label in range(classes):
        base = 250.0 + 170.0 * label
        for i in range(per_class):
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.4, 0.8)
            signal = amp * np.sin(2 * np.pi * base * t + phase)
            signal += 0.3 * amp * np.sin(2 * np.pi * 2 * base * t + phase)
            signal += rng.normal(0.0, 0.01, size=n)
            path = directory / f"{label}_synth_{i}.wav"
            write_wav(path, signal, sample_rate)
            written.append(path)
    return written
