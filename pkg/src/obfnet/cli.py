"""Command-line interface.

Subcommands:
  data prepare     validate a dataset directory or generate synthetic data
  train infnet     train an inference net and save it
  train obfnet-set train a set of obfuscators against a frozen inference net
  eval             accuracy of a model (optionally behind an obfuscator)
  serve            run the backend inference server
  edge             act as an edge device against a running server
  bench            timing benchmark over batch sizes
  metrics          obfuscation-quality report and image grid for a set
  modelinfo        parameter counts, file size, transfer times

Exit codes: 0 success, 1 runtime error (one line on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import metrics as metrics_mod
from . import modelio, protocol
from .data import load_fsd, load_mnist, synth_fixture, synth_wav_dir
from .data.dataset import split_dataset
from .data.mnist import write_idx_images, write_idx_labels
from .errors import DataError, ObfnetError
from .manifest import ObfSetManifest
from .training import (
    ConcatenatedModel,
    TrainConfig,
    evaluate,
    generate_obfnet_set,
    train_infnet,
    train_obfnet,
)
from .zoo import ArchSpec, count_params

log = logging.getLogger("obfnet")


def load_dataset_dir(path, seed=0):
    """Load an IDX directory (mnist layout) or a WAV directory (fsd layout)."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path} is not a directory")
    if list(path.glob("train-images*")):
        return load_mnist(path)
    if list(path.glob("*.wav")):
        return load_fsd(path, seed=seed)
    raise DataError(f"{path} contains neither IDX files nor WAV files")


def _pick_split(data, name):
    try:
        return {"train": data.train, "validation": data.validation,
                "test": data.test}[name]
    except KeyError:
        raise DataError(f"unknown split {name!r}") from None


def _train_config(args):
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )


def _limit_train(data, limit):
    if limit and limit < len(data.train):
        data.train = data.train.subset(np.arange(limit))
    return data


def _arch_spec(args):
    return ArchSpec(args.arch, hidden_width=getattr(args, "hidden", None))


def cmd_data_prepare(args):
    out = Path(args.dir)
    if args.kind == "mnist":
        data = load_mnist(out)
        print(f"mnist ok: train={len(data.train)} val={len(data.validation)} "
              f"test={len(data.test)}")
        return 0
    if args.kind == "fsd":
        data = load_fsd(out, seed=args.seed)
        print(f"fsd ok: train={len(data.train)} val={len(data.validation)} "
              f"test={len(data.test)} skipped={len(data.skipped_files)}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "synth-mnist":
        train = synth_fixture("mnist-like", args.classes, args.per_class, seed=args.seed)
        test = synth_fixture("mnist-like", args.classes,
                             max(args.per_class // 5, 1), seed=args.seed + 1)
        to_u8 = lambda ds: np.clip(np.round(ds.samples * 255), 0, 255).astype(np.uint8)
        write_idx_images(out / "train-images-idx3-ubyte", to_u8(train))
        write_idx_labels(out / "train-labels-idx1-ubyte", train.labels)
        write_idx_images(out / "t10k-images-idx3-ubyte", to_u8(test))
        write_idx_labels(out / "t10k-labels-idx1-ubyte", test.labels)
        print(f"wrote synthetic IDX dataset to {out} "
              f"({len(train)} train, {len(test)} test)")
        return 0
    if args.kind == "synth-fsd":
        written = synth_wav_dir(out, classes=args.classes, per_class=args.per_class,
                                seed=args.seed)
        print(f"wrote {len(written)} synthetic WAV files to {out}")
        return 0
    raise DataError(f"unknown dataset kind {args.kind!r}")


def cmd_train_infnet(args):
    data = _limit_train(load_dataset_dir(args.data, seed=args.seed), args.limit)
    cfg = _train_config(args)
    net, report = train_infnet(_arch_spec(args), data, cfg)
    size = modelio.save(net, args.out)
    if args.report_dir:
        report_dir = Path(args.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        report.to_csv(report_dir / "training.csv")
        (report_dir / "summary.txt").write_text(
            f"arch: {args.arch}\nseed: {args.seed}\nepochs: {args.epochs}\n"
            f"best_epoch: {report.best_epoch}\n"
            f"best_val_accuracy: {report.best_val_accuracy:.6f}\n"
            f"test_accuracy: {report.test_accuracy:.6f}\n"
            f"model_bytes: {size}\n")
    print(f"trained {args.arch}: test_accuracy={report.test_accuracy:.4f} "
          f"({size} bytes -> {args.out})")
    return 0


def cmd_train_obfnet_set(args):
    data = _limit_train(load_dataset_dir(args.data, seed=args.seed), args.limit)
    infnet = modelio.load(args.infnet)
    cfg = _train_config(args)
    manifest = generate_obfnet_set(_arch_spec(args), infnet, data, cfg,
                                   count=args.count, out_dir=args.out_dir,
                                   drop_gate=args.drop_gate)
    for i, e in enumerate(manifest.entries):
        print(f"member {i}: seed={e.seed} test_accuracy={e.test_accuracy:.4f} "
              f"status={e.status}")
    print(f"manifest -> {Path(args.out_dir) / 'manifest.txt'}")
    return 0


def cmd_eval(args):
    data = load_dataset_dir(args.data, seed=args.seed)
    model = modelio.load(args.model)
    if args.obfnet:
        model = ConcatenatedModel(modelio.load(args.obfnet), model)
    result = evaluate(model, _pick_split(data, args.split))
    print(f"accuracy: {result.accuracy:.6f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "confusion.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred"] + list(range(result.confusion.shape[1])))
            for i, row in enumerate(result.confusion):
                writer.writerow([i] + row.tolist())
        (out / "accuracy.txt").write_text(f"accuracy: {result.accuracy:.6f}\n")
    return 0


def cmd_serve(args):
    server = protocol.InferenceServer(args.model, bind=protocol.parse_address(args.bind))
    host, port = server.address
    print(f"serving {args.model} on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_edge(args):
    data = load_dataset_dir(args.data, seed=args.seed)
    split = _pick_split(data, args.split)
    if args.limit:
        split = split.subset(np.arange(min(args.limit, len(split))))
    cfg = protocol.EdgeConfig(
        server=args.server,
        manifest_path=str(Path(args.set) / "manifest.txt") if args.set else None,
        mode="opt-in" if args.opt_in else "opt-out",
        selection_seed=args.seed,
    )
    correct = 0
    with protocol.EdgeDevice(cfg) as device:
        for i in range(len(split)):
            result = device.infer(split.samples[i])
            correct += int(result.label == split.labels[i])
    accuracy = correct / len(split)
    print(f"mode: {cfg.mode}\nsamples: {len(split)}\naccuracy: {accuracy:.6f}")
    return 0


def cmd_bench(args):
    net = modelio.load(args.model)
    batch_sizes = [int(b) for b in args.batch_sizes.split(",")]
    reports = bench_mod.bench_model(net, batch_sizes, runs=args.runs, seed=args.seed)
    for r in reports:
        print(f"batch {r.batch_size:4d}: per-sample min={r.per_sample_min * 1e3:.4f}ms "
              f"avg={r.per_sample_avg * 1e3:.4f}ms max={r.per_sample_max * 1e3:.4f}ms")
    if args.out:
        bench_mod.write_bench_csv(reports, args.out)
        print(f"csv -> {args.out}")
    return 0


def cmd_metrics(args):
    manifest_path = Path(args.set) / "manifest.txt"
    manifest = ObfSetManifest.load(manifest_path)
    nets = manifest.load_networks(manifest_path.parent)
    data = load_dataset_dir(args.data, seed=args.seed)
    probe = _pick_split(data, args.split)
    if args.limit:
        probe = probe.subset(np.arange(min(args.limit, len(probe))))
    report = metrics_mod.obfuscation_report(nets, probe)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_text(out / "obfuscation.txt")
    report.to_json(out / "obfuscation.json")
    grid = metrics_mod.dump_obfuscated_grid(
        nets, probe.samples[:args.grid_samples], out / "grid.pgm")
    print(f"mean_abs_correlation: {report.mean_abs_correlation:.4f}")
    if report.min_pairwise_distinctness is not None:
        print(f"min_pairwise_distinctness: {report.min_pairwise_distinctness:.4f}")
    print(f"reports -> {out} (grid: {grid.name})")
    return 0


def cmd_modelinfo(args):
    path = Path(args.model)
    net = modelio.load(path)
    size = path.stat().st_size
    print(f"arch: {net.name or 'unnamed'}")
    print(f"input_shape: {net.input_shape}")
    print(f"layers: {len(net.layers)}")
    print(f"params: {count_params(net)}")
    print(f"params_with_stats: {count_params(net, include_stats=True)}")
    print(f"file_bytes: {size}")
    if args.rates:
        for rate in args.rates.split(","):
            rate_bps = float(rate)
            seconds = modelio.transfer_time(size, rate_bps)
            print(f"transfer@{rate_bps:g}bps: {seconds:.4f}s")
    return 0


def _add_train_flags(p):
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--optimizer", choices=["adadelta", "sgd"], default="adadelta")
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=0,
                   help="cap the training split at N samples (0 = all)")


def build_parser():
    parser = argparse.ArgumentParser(prog="obfnet", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_data = sub.add_parser("data", help="dataset utilities")
    data_sub = p_data.add_subparsers(dest="data_command", required=True)
    p_prep = data_sub.add_parser("prepare", help="validate or synthesize a dataset")
    p_prep.add_argument("--kind", required=True,
                        choices=["mnist", "fsd", "synth-mnist", "synth-fsd"])
    p_prep.add_argument("--dir", required=True)
    p_prep.add_argument("--classes", type=int, default=10)
    p_prep.add_argument("--per-class", type=int, default=100)
    p_prep.add_argument("--seed", type=int, default=0)
    p_prep.set_defaults(func=cmd_data_prepare)

    p_train = sub.add_parser("train", help="training")
    train_sub = p_train.add_subparsers(dest="train_command", required=True)

    p_inf = train_sub.add_parser("infnet", help="train an inference net")
    p_inf.add_argument("--arch", required=True)
    _add_train_flags(p_inf)
    p_inf.add_argument("--out", required=True, help="model file to write")
    p_inf.add_argument("--report-dir", default="")
    p_inf.set_defaults(func=cmd_train_infnet)

    p_set = train_sub.add_parser("obfnet-set", help="train a set of obfuscators")
    p_set.add_argument("--arch", required=True)
    p_set.add_argument("--hidden", type=int, default=None,
                       help="first-hidden-layer width (mnist obfuscators)")
    p_set.add_argument("--infnet", required=True, help="frozen inference model file")
    p_set.add_argument("--count", type=int, default=1)
    p_set.add_argument("--drop-gate", type=float, default=0.05)
    _add_train_flags(p_set)
    p_set.add_argument("--out-dir", required=True)
    p_set.set_defaults(func=cmd_train_obfnet_set)

    p_eval = sub.add_parser("eval", help="accuracy of a model on a split")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--obfnet", default="", help="apply this obfuscator first")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", default="test",
                        choices=["train", "validation", "test"])
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default="")
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="run the backend server")
    p_serve.add_argument("--model", required=True)
    p_serve.add_argument("--bind", default="127.0.0.1:7070")
    p_serve.set_defaults(func=cmd_serve)

    p_edge = sub.add_parser("edge", help="edge device against a running server")
    p_edge.add_argument("--server", required=True)
    p_edge.add_argument("--set", default="", help="obfuscator set directory")
    mode = p_edge.add_mutually_exclusive_group(required=True)
    mode.add_argument("--opt-in", action="store_true")
    mode.add_argument("--opt-out", action="store_true")
    p_edge.add_argument("--data", required=True)
    p_edge.add_argument("--split", default="test",
                        choices=["train", "validation", "test"])
    p_edge.add_argument("--limit", type=int, default=0)
    p_edge.add_argument("--seed", type=int, default=0)
    p_edge.set_defaults(func=cmd_edge)

    p_bench = sub.add_parser("bench", help="timing benchmark")
    p_bench.add_argument("--model", required=True)
    p_bench.add_argument("--batch-sizes", default="1,2,4,8,16,32,64")
    p_bench.add_argument("--runs", type=int, default=100)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="")
    p_bench.set_defaults(func=cmd_bench)

    p_metrics = sub.add_parser("metrics", help="obfuscation-quality report")
    p_metrics.add_argument("--set", required=True)
    p_metrics.add_argument("--data", required=True)
    p_metrics.add_argument("--split", default="test",
                           choices=["train", "validation", "test"])
    p_metrics.add_argument("--limit", type=int, default=0)
    p_metrics.add_argument("--grid-samples", type=int, default=10)
    p_metrics.add_argument("--seed", type=int, default=0)
    p_metrics.add_argument("--out", required=True)
    p_metrics.set_defaults(func=cmd_metrics)

    p_info = sub.add_parser("modelinfo", help="inspect a model file")
    p_info.add_argument("model")
    p_info.add_argument("--rates", default="",
                        help="comma-separated link rates in bits/second")
    p_info.set_defaults(func=cmd_modelinfo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ObfnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
