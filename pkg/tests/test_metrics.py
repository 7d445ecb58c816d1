"""Obfuscation-quality proxies and image dumps."""

import numpy as np
import pytest

from obfnet.data import synth_fixture
from obfnet.engine import Dense, Flatten, Network, Reshape
from obfnet.errors import DataError, ShapeError
from obfnet.metrics import (
    abs_pearson,
    dump_obfuscated_grid,
    histogram_distance,
    obfuscation_report,
    read_pgm,
    write_pgm,
)


def _identity_net():
    return Network([Flatten(), Reshape((28, 28))], input_shape=(28, 28))


def _constant_net(value=0.5):
    net = Network([Flatten(), Dense(784, 784), Reshape((28, 28))],
                  input_shape=(28, 28))
    net.layers[1].params["w"][:] = 0.0
    net.layers[1].params["b"][:] = value
    return net


@pytest.fixture(scope="module")
def probe():
    return synth_fixture("mnist-like", classes=3, per_class=10, seed=6)


class TestCorrelation:
    def test_identity_mapping_scores_one(self, probe):
        report = obfuscation_report(_identity_net(), probe)
        assert report.mean_abs_correlation == pytest.approx(1.0, abs=1e-6)

    def test_constant_output_scores_zero_by_convention(self, probe):
        report = obfuscation_report(_constant_net(), probe)
        assert report.mean_abs_correlation == 0.0

    def test_abs_pearson_sign_invariant(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=100)
        assert abs_pearson(x, -3.0 * x) == pytest.approx(1.0)

    def test_zero_variance_convention(self):
        assert abs_pearson(np.ones(10), np.arange(10)) == 0.0


class TestHistogramDistance:
    def test_identical_distributions_zero(self):
        x = np.linspace(0, 1, 256)
        assert histogram_distance(x, x.copy()) == 0.0

    def test_disjoint_distributions_positive(self):
        assert histogram_distance(np.zeros(100), np.ones(100)) > 0.05


class TestReport:
    def test_distinctness_zero_iff_identical(self, probe):
        a = _identity_net()
        report_same = obfuscation_report([a, _identity_net()], probe)
        assert report_same.min_pairwise_distinctness == 0.0
        report_diff = obfuscation_report([a, _constant_net()], probe)
        assert report_diff.min_pairwise_distinctness > 0.0

    def test_deterministic(self, probe):
        a = obfuscation_report(_constant_net(), probe)
        b = obfuscation_report(_constant_net(), probe)
        assert a == b

    def test_empty_probe_rejected(self, probe):
        empty = probe.subset(np.zeros(0, dtype=int))
        with pytest.raises(DataError):
            obfuscation_report(_identity_net(), empty)

    def test_shape_mismatch_rejected(self, probe):
        net = Network([Flatten(), Reshape((20, 45))], input_shape=(20, 45))
        with pytest.raises(ShapeError):
            obfuscation_report(net, probe)

    def test_text_and_json_outputs(self, probe, tmp_path):
        report = obfuscation_report(_constant_net(), probe)
        report.to_text(tmp_path / "report.txt")
        report.to_json(tmp_path / "report.json")
        text = (tmp_path / "report.txt").read_text()
        assert "mean_abs_correlation" in text
        import json
        parsed = json.loads((tmp_path / "report.json").read_text())
        assert parsed["probe_size"] == len(probe)


class TestGridDump:
    def test_grid_written_and_parses(self, probe, tmp_path):
        path = dump_obfuscated_grid(_constant_net(), probe.samples[:10],
                                    tmp_path / "grid.pgm")
        image = read_pgm(path)
        assert image.ndim == 2
        # 2 rows of 28px tiles plus one 2px separator
        assert image.shape[0] == 2 * 28 + 2
        assert image.shape[1] == 10 * 28 + 9 * 2

    def test_values_clamped_to_byte_range(self, probe, tmp_path):
        path = dump_obfuscated_grid(_identity_net(), probe.samples[:4],
                                    tmp_path / "grid.pgm")
        image = read_pgm(path)
        assert image.min() >= 0 and image.max() <= 255

    def test_bit_identical_across_runs(self, probe, tmp_path):
        a = dump_obfuscated_grid(_constant_net(), probe.samples[:5], tmp_path / "a.pgm")
        b = dump_obfuscated_grid(_constant_net(), probe.samples[:5], tmp_path / "b.pgm")
        assert a.read_bytes() == b.read_bytes()

    def test_multiple_obfuscators_add_rows(self, probe, tmp_path):
        path = dump_obfuscated_grid([_identity_net(), _constant_net()],
                                    probe.samples[:3], tmp_path / "grid.pgm")
        image = read_pgm(path)
        assert image.shape[0] == 3 * 28 + 2 * 2

    def test_non_image_samples_rejected(self, tmp_path):
        with pytest.raises(ShapeError):
            dump_obfuscated_grid(_identity_net(), np.zeros((4, 784)),
                                 tmp_path / "grid.pgm")


def test_pgm_roundtrip(tmp_path):
    image = np.arange(40, dtype=np.uint8).reshape(5, 8)
    write_pgm(tmp_path / "x.pgm", image)
    assert np.array_equal(read_pgm(tmp_path / "x.pgm"), image)
