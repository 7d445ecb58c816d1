"""Command-line interface: happy paths, equivalences, exit codes."""

import threading

import numpy as np
import pytest

from obfnet import modelio, protocol
from obfnet.cli import main
from obfnet.metrics import read_pgm


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth-mnist")
    assert main(["data", "prepare", "--kind", "synth-mnist", "--dir", str(out),
                 "--classes", "3", "--per-class", "60", "--seed", "5"]) == 0
    return out


@pytest.fixture(scope="module")
def trained_model(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "im.onet"
    report_dir = out.parent / "report"
    code = main(["train", "infnet", "--arch", "mnist-im", "--data", str(synth_dir),
                 "--epochs", "6", "--seed", "1", "--out", str(out),
                 "--report-dir", str(report_dir)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def obf_set_dir(synth_dir, trained_model, tmp_path_factory):
    out = tmp_path_factory.mktemp("obfset")
    code = main(["train", "obfnet-set", "--arch", "mnist-om", "--hidden", "8",
                 "--infnet", str(trained_model), "--data", str(synth_dir),
                 "--count", "2", "--epochs", "3", "--seed", "9",
                 "--drop-gate", "1.0", "--out-dir", str(out)])
    assert code == 0
    return out


class TestDataPrepare:
    def test_synth_mnist_layout(self, synth_dir):
        names = {p.name for p in synth_dir.iterdir()}
        assert names == {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                         "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}

    def test_validate_same_dir(self, synth_dir, capsys):
        assert main(["data", "prepare", "--kind", "mnist", "--dir", str(synth_dir)]) == 0
        assert "mnist ok" in capsys.readouterr().out

    def test_synth_fsd(self, tmp_path):
        assert main(["data", "prepare", "--kind", "synth-fsd", "--dir", str(tmp_path),
                     "--classes", "2", "--per-class", "4"]) == 0
        assert len(list(tmp_path.glob("*.wav"))) == 8


class TestTrain:
    def test_model_and_reports_written(self, trained_model):
        assert trained_model.exists()
        report_dir = trained_model.parent / "report"
        assert (report_dir / "training.csv").exists()
        summary = (report_dir / "summary.txt").read_text()
        assert "test_accuracy" in summary

    def test_deterministic_artifact(self, synth_dir, tmp_path):
        outs = []
        for name in ("a.onet", "b.onet"):
            path = tmp_path / name
            main(["train", "infnet", "--arch", "mnist-im", "--data", str(synth_dir),
                  "--epochs", "2", "--seed", "7", "--out", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_obfnet_set_files(self, obf_set_dir):
        assert (obf_set_dir / "manifest.txt").exists()
        assert len(list(obf_set_dir.glob("*.onet"))) == 2


class TestEval:
    def test_eval_writes_reports(self, synth_dir, trained_model, tmp_path, capsys):
        code = main(["eval", "--model", str(trained_model), "--data", str(synth_dir),
                     "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "accuracy:" in out
        assert (tmp_path / "confusion.csv").exists()
        assert (tmp_path / "accuracy.txt").exists()

    def test_eval_with_obfnet(self, synth_dir, trained_model, obf_set_dir, capsys):
        member = sorted(obf_set_dir.glob("*.onet"))[0]
        code = main(["eval", "--model", str(trained_model), "--obfnet", str(member),
                     "--data", str(synth_dir)])
        assert code == 0
        assert "accuracy:" in capsys.readouterr().out


class TestEdge:
    def test_edge_accuracy_matches_eval(self, synth_dir, trained_model, obf_set_dir,
                                        capsys):
        server = protocol.InferenceServer(str(trained_model),
                                          bind=("127.0.0.1", 0)).start()
        try:
            address = f"{server.address[0]}:{server.address[1]}"
            assert main(["eval", "--model", str(trained_model),
                         "--data", str(synth_dir)]) == 0
            eval_out = capsys.readouterr().out
            assert main(["edge", "--server", address, "--data", str(synth_dir),
                         "--opt-out"]) == 0
            edge_out = capsys.readouterr().out
            eval_acc = [l for l in eval_out.splitlines() if "accuracy" in l][0]
            edge_acc = [l for l in edge_out.splitlines() if "accuracy" in l][0]
            assert eval_acc.split()[-1] == edge_acc.split()[-1]
            # opt-in path end to end
            assert main(["edge", "--server", address, "--data", str(synth_dir),
                         "--set", str(obf_set_dir), "--opt-in", "--seed", "3"]) == 0
            assert "opt-in" in capsys.readouterr().out
        finally:
            server.stop()


class TestBench:
    def test_bench_csv(self, trained_model, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code = main(["bench", "--model", str(trained_model),
                     "--batch-sizes", "1,2", "--runs", "5", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3
        assert "per_sample_avg_s" in lines[0]


class TestMetrics:
    def test_metrics_outputs(self, synth_dir, obf_set_dir, tmp_path, capsys):
        code = main(["metrics", "--set", str(obf_set_dir), "--data", str(synth_dir),
                     "--out", str(tmp_path), "--grid-samples", "5"])
        assert code == 0
        assert (tmp_path / "obfuscation.txt").exists()
        assert (tmp_path / "obfuscation.json").exists()
        grid = read_pgm(tmp_path / "grid.pgm")
        assert grid.ndim == 2


class TestModelinfo:
    def test_counts_and_transfer_times(self, trained_model, capsys):
        code = main(["modelinfo", str(trained_model), "--rates", "10e6,100e6"])
        assert code == 0
        out = capsys.readouterr().out
        assert "params: 932362" in out
        assert "transfer@1e+07bps" in out
        # transfer seconds = bytes * 8 / rate
        size = int([l for l in out.splitlines() if "file_bytes" in l][0].split()[-1])
        t10 = float([l for l in out.splitlines()
                     if "transfer@1e+07" in l][0].split()[-1].rstrip("s"))
        assert t10 == pytest.approx(size * 8 / 10e6, rel=1e-3)


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2

    def test_missing_model_is_runtime_error(self, synth_dir, capsys):
        code = main(["eval", "--model", "/nonexistent/m.onet", "--data", str(synth_dir)])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_dataset_dir(self, tmp_path, capsys):
        code = main(["eval", "--model", "x.onet", "--data", str(tmp_path)])
        assert code == 1
