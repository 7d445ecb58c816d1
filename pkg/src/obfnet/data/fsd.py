"""Spoken-digit WAV directory loading.

Files follow the dataset convention of a leading digit label in the
name, e.g. ``7_speaker_12.wav``.  Files without a parsable label prefix
are skipped with a warning and recorded in the split's bookkeeping;
unreadable or non-PCM files raise.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..errors import DataError
from .dataset import Dataset, SplitDataset, split_dataset
from .mfcc import MfccConfig, extract_mfcc, read_wav

log = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


def load_fsd(directory, cfg: MfccConfig | None = None, seed=0,
             num_classes=10) -> SplitDataset:
    """Load and featurize every labeled WAV, then split 80/10/10.

    The split is stratified by label and fully determined by the seed.
    """
    cfg = cfg or MfccConfig()
    directory = Path(directory)
    paths = sorted(directory.glob("*.wav"))
    if not paths:
        raise DataError(f"no WAV files found in {directory}")
    samples, labels, skipped = [], [], []
    for path in paths:
        prefix = path.name.split("_")[0]
        if not prefix.isdigit() or not 0 <= int(prefix) < num_classes:
            log.warning("skipping %s: no parsable label prefix", path.name)
            skipped.append(path.name)
            continue
        _, signal = read_wav(path, expected_rate=cfg.sample_rate)
        samples.append(extract_mfcc(signal, cfg))
        labels.append(int(prefix))
    if not samples:
        raise DataError(f"no labeled WAV files usable in {directory}")
    ds = Dataset(np.stack(samples), np.array(labels), num_classes)
    split = split_dataset(ds, SPLIT_FRACTIONS, seed=seed, stratified=True)
    split.skipped_files = skipped
    return split
