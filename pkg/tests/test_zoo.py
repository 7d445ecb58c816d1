"""Architecture construction and parameter counting."""

import numpy as np
import pytest

from obfnet.engine import Dense, Network
from obfnet.errors import ShapeError
from obfnet.zoo import ARCH_NAMES, ArchSpec, MNIST_WIDTH_SWEEP, build, count_params

# frozen sums over the published layer dimensions
EXPECTED_COUNTS = {
    # 784*512+512 + 2*(512*512+512) + 512*10+10
    "mnist-im": 932_362,
    # 320 + 18,496 + 1,179,776 + 1,290
    "mnist-ic": 1_199_882,
    # 900*800+800 + 800*300+300 + 300*128+128 + 128*64+64 + 64*10+10
    "fsd-im": 1_008_534,
}


@pytest.mark.parametrize("name,expected", sorted(EXPECTED_COUNTS.items()))
def test_parameter_counts_exact(name, expected):
    assert count_params(build(ArchSpec(name), seed=0)) == expected


def test_mnist_om16_parameter_count():
    # 784*16+16 + 16*784+784 (both stated directly in the scaling analysis)
    net = build(ArchSpec("mnist-om", hidden_width=16), seed=0)
    assert count_params(net) == 25_888


def test_single_dense_784_count():
    net = Network([Dense(784, 784)], input_shape=(784,))
    assert count_params(net) == 615_440


def test_empty_network_counts_zero():
    assert count_params(Network([], input_shape=(4,))) == 0


def test_count_with_batchnorm_stats():
    net = build(ArchSpec("fsd-om"), seed=0)
    base = count_params(net)
    with_stats = count_params(net, include_stats=True)
    # two batch-norm layers of 200 and 900 channels -> 2200 moving values
    assert with_stats - base == 2 * (200 + 900)


@pytest.mark.parametrize("name", ARCH_NAMES)
def test_every_arch_builds_and_forwards_batch_of_two(name):
    spec = ArchSpec(name, hidden_width=16)
    net = build(spec, seed=3)
    x = np.random.default_rng(0).random((2,) + net.input_shape, dtype=np.float32)
    out = net.forward(x)
    assert out.shape == (2,) + net.output_shape
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("name", ["fsd-oc", "fsd-om", "mnist-oc", "mnist-om"])
def test_obfuscators_preserve_shape(name):
    net = build(ArchSpec(name, hidden_width=32), seed=1)
    assert net.output_shape == net.input_shape


def test_counts_invariant_to_seed():
    a = build(ArchSpec("mnist-om", hidden_width=64), seed=0)
    b = build(ArchSpec("mnist-om", hidden_width=64), seed=12345)
    assert count_params(a) == count_params(b)
    assert not np.array_equal(a.layers[1].params["w"], b.layers[1].params["w"])


def test_same_seed_builds_identical_weights():
    a = build(ArchSpec("mnist-ic"), seed=9)
    b = build(ArchSpec("mnist-ic"), seed=9)
    assert np.array_equal(a.layers[0].params["w"], b.layers[0].params["w"])


def test_unknown_arch_rejected():
    with pytest.raises(ShapeError):
        ArchSpec("mnist-xx")


def test_nonpositive_width_rejected():
    with pytest.raises(ShapeError):
        ArchSpec("mnist-om", hidden_width=0)


def test_width_sweep_covers_plotted_range():
    assert MNIST_WIDTH_SWEEP == (8, 16, 32, 64, 128, 256, 512)
    for width in MNIST_WIDTH_SWEEP:
        net = build(ArchSpec("mnist-om", hidden_width=width), seed=0)
        assert net.output_shape == (28, 28)


def test_fsd_counts_reported_as_built():
    # the figure-derived sums for the spoken-digit conv nets
    assert count_params(build(ArchSpec("fsd-ic"), seed=0)) == 1_962_586
    assert count_params(build(ArchSpec("fsd-oc"), seed=0)) == 1_036_218
    assert count_params(build(ArchSpec("fsd-om"), seed=0)) == 363_300
