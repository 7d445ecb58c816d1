from .dataset import Dataset, SplitDataset, split_dataset
from .fsd import load_fsd
from .mfcc import MfccConfig, extract_mfcc, mel_filterbank, read_wav, write_wav
from .mnist import (
    load_mnist,
    read_idx_images,
    read_idx_labels,
    write_idx_images,
    write_idx_labels,
)
from .synth import synth_fixture, synth_wav_dir

__all__ = [
    "Dataset",
    "MfccConfig",
    "SplitDataset",
    "extract_mfcc",
    "load_fsd",
    "load_mnist",
    "mel_filterbank",
    "read_idx_images",
    "read_idx_labels",
    "read_wav",
    "split_dataset",
    "synth_fixture",
    "synth_wav_dir",
    "write_idx_images",
    "write_idx_labels",
    "write_wav",
]
