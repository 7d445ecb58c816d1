"""Shared fixtures.

Real-dataset paths come from OBFNET_MNIST_DIR / OBFNET_FSD_DIR (or
./data/mnist, ./data/fsd).  When absent, the suite substitutes a
digits dataset (sklearn's 8x8 digits upscaled to 28x28, shuffled, and
written through the real IDX pipeline) so every code path still runs
end to end; paper-scale accuracy assertions are skipped with a reason.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from obfnet.data import load_mnist, synth_fixture, write_idx_images, write_idx_labels
from obfnet.data.dataset import split_dataset
from obfnet.training import TrainConfig, train_infnet, train_obfnet
from obfnet.zoo import ArchSpec

DIGITS_SHUFFLE_SEED = 20260810
DIGITS_TEST_COUNT = 360


def _dataset_dir(env_var, default):
    override = os.environ.get(env_var)
    candidates = [Path(override)] if override else []
    candidates.append(Path(__file__).resolve().parent.parent / "data" / default)
    for path in candidates:
        if path.is_dir() and any(path.iterdir()):
            return path
    return None


def mnist_real_dir():
    path = _dataset_dir("OBFNET_MNIST_DIR", "mnist")
    if path and list(path.glob("train-images*")):
        return path
    return None


def fsd_real_dir():
    path = _dataset_dir("OBFNET_FSD_DIR", "fsd")
    if path and list(path.glob("*.wav")):
        return path
    return None


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """28x28 digit images written as IDX files (the MNIST stand-in)."""
    from scipy.ndimage import zoom
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = np.stack([zoom(im / 16.0, 3.5, order=1) for im in digits.images])
    labels = digits.target
    rng = np.random.default_rng(DIGITS_SHUFFLE_SEED)
    order = rng.permutation(len(images))
    images, labels = images[order], labels[order]
    as_u8 = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)

    out = tmp_path_factory.mktemp("digits-idx")
    split = len(images) - DIGITS_TEST_COUNT
    write_idx_images(out / "train-images-idx3-ubyte", as_u8[:split])
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[:split])
    write_idx_images(out / "t10k-images-idx3-ubyte", as_u8[split:])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", labels[split:])
    return out


@pytest.fixture(scope="session")
def digits_data(digits_dir):
    return load_mnist(digits_dir)


@pytest.fixture(scope="session")
def blob_data():
    """Separable 3-class blobs shaped like the image family."""
    ds = synth_fixture("mnist-like", classes=3, per_class=100, seed=7)
    return split_dataset(ds, seed=1)


@pytest.fixture(scope="session")
def infnet_im(digits_data):
    """(network, report) for the dense inference net on the digits stand-in."""
    return train_infnet(ArchSpec("mnist-im"), digits_data,
                        TrainConfig(epochs=20, seed=1))


@pytest.fixture(scope="session")
def infnet_ic(digits_data):
    """(network, report) for the convolutional inference net."""
    return train_infnet(ArchSpec("mnist-ic"), digits_data,
                        TrainConfig(epochs=12, seed=1))


@pytest.fixture(scope="session")
def om128_ic(digits_data, infnet_ic):
    """(obfuscator, report): width-128 obfuscator against the frozen conv net."""
    return train_obfnet(ArchSpec("mnist-om", hidden_width=128), infnet_ic[0],
                        digits_data, TrainConfig(epochs=12, seed=2))


@pytest.fixture(scope="session")
def om16_ic(digits_data, infnet_ic):
    """(obfuscator, report): width-16 obfuscator against the frozen conv net."""
    return train_obfnet(ArchSpec("mnist-om", hidden_width=16), infnet_ic[0],
                        digits_data, TrainConfig(epochs=12, seed=2))
