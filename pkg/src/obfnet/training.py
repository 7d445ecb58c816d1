"""Training loops: inference nets, obfuscators against frozen inference
nets, and whole obfuscator sets.

The obfuscator procedure: concatenate a freshly initialized obfuscator
in front of the inference net, freeze every inference-net weight, train
the concatenation end to end, and keep the epoch checkpoint with the
highest validation accuracy.  Repeating this with different seeds
yields a set of distinct obfuscators that all map into the same frozen
classifier.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import modelio
from .data.dataset import Dataset, SplitDataset
from .engine import Network, cross_entropy, make_optimizer, softmax_cross_entropy_grad
from .errors import DataError, ShapeError, StateError, TrainingDiverged
from .manifest import ManifestEntry, ObfSetManifest
from .zoo import ArchSpec, build

log = logging.getLogger(__name__)

DEFAULT_DROP_GATE = 0.05
EVAL_BATCH = 256


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 32
    optimizer: str = "adadelta"
    learning_rate: float = 1.0
    rho: float = 0.95
    epsilon: float = 1e-6
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")

    def make_optimizer(self):
        return make_optimizer(self.optimizer, learning_rate=self.learning_rate,
                              rho=self.rho, epsilon=self.epsilon,
                              momentum=self.momentum)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float


@dataclass
class TrainingReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    test_accuracy: float | None = None
    raw_test_accuracy: float | None = None

    @property
    def accuracy_drop(self):
        """Raw-input accuracy minus obfuscated accuracy, in fractions."""
        if self.raw_test_accuracy is None or self.test_accuracy is None:
            return None
        return self.raw_test_accuracy - self.test_accuracy

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_accuracy", "val_accuracy"])
            for row in self.epochs:
                writer.writerow([row.epoch, f"{row.train_loss:.6f}",
                                 f"{row.train_accuracy:.6f}", f"{row.val_accuracy:.6f}"])


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # [true, predicted] counts


class ConcatenatedModel:
    """Obfuscator followed by a frozen inference net.

    Exposes the same forward/backward/layers protocol as Network so the
    optimizer and evaluation code treat it uniformly; only the
    obfuscator layers are trainable.
    """

    def __init__(self, obfnet: Network, infnet: Network):
        if obfnet.output_shape != obfnet.input_shape:
            raise ShapeError(f"obfuscator must preserve its input shape, got "
                             f"{obfnet.input_shape} -> {obfnet.output_shape}")
        if obfnet.output_shape != infnet.input_shape:
            raise ShapeError(f"obfuscator output {obfnet.output_shape} does not "
                             f"match inference-net input {infnet.input_shape}")
        self.obfnet = obfnet
        self.infnet = infnet.freeze()

    @property
    def layers(self):
        return self.obfnet.layers + self.infnet.layers

    @property
    def input_shape(self):
        return self.obfnet.input_shape

    @property
    def output_shape(self):
        return self.infnet.output_shape

    def forward(self, x, training=False, rng=None):
        return self.infnet.forward(
            self.obfnet.forward(x, training=training, rng=rng),
            training=training, rng=rng)

    def backward(self, grad_out, fused_softmax=False):
        grad = self.infnet.backward(grad_out, fused_softmax=fused_softmax)
        return self.obfnet.backward(grad)

    def obfuscate(self, x):
        return self.obfnet.forward(x, training=False)

    # the inference net is frozen, so checkpoints only need the obfuscator
    def snapshot(self):
        return self.obfnet.snapshot()

    def restore(self, snapshot):
        self.obfnet.restore(snapshot)


def evaluate(model, ds: Dataset, batch_size=EVAL_BATCH) -> EvalResult:
    """Accuracy and confusion counts in inference mode.

    Argmax ties resolve to the lowest class index.
    """
    if len(ds) == 0:
        raise DataError("cannot evaluate on an empty split")
    num_classes = model.output_shape[-1]
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for start in range(0, len(ds), batch_size):
        x = ds.samples[start:start + batch_size]
        y = ds.labels[start:start + batch_size]
        pred = model.forward(x, training=False).argmax(axis=-1)
        np.add.at(confusion, (y, pred), 1)
    accuracy = float(np.trace(confusion)) / len(ds)
    return EvalResult(accuracy=accuracy, confusion=confusion)


def _fit(model, data: SplitDataset, cfg: TrainConfig) -> TrainingReport:
    """Shared epoch loop with best-validation checkpointing."""
    rng = np.random.default_rng(cfg.seed)
    optimizer = cfg.make_optimizer()
    report = TrainingReport()
    train = data.train
    n = len(train)
    best_snapshot = None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = train.samples[idx]
            y = train.labels[idx]
            probs = model.forward(x, training=True, rng=rng)
            loss, _ = cross_entropy(probs, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            model.backward(softmax_cross_entropy_grad(probs, y), fused_softmax=True)
            optimizer.step(model)
            loss_sum += loss * idx.size
            correct += int((probs.argmax(axis=-1) == y).sum())
        val_accuracy = evaluate(model, data.validation).accuracy
        report.epochs.append(EpochStats(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            val_accuracy=val_accuracy,
        ))
        if best_snapshot is None or val_accuracy > report.best_val_accuracy:
            report.best_val_accuracy = val_accuracy
            report.best_epoch = epoch
            best_snapshot = model.snapshot()
        log.debug("epoch %d: loss=%.4f train=%.4f val=%.4f", epoch,
                  report.epochs[-1].train_loss, report.epochs[-1].train_accuracy,
                  val_accuracy)
    model.restore(best_snapshot)
    return report


def train_infnet(arch, data: SplitDataset, cfg: TrainConfig):
    """Train an inference net; returns (network, report).

    The returned network is the epoch checkpoint with the highest
    validation accuracy; the report carries per-epoch loss/accuracy and
    the final test accuracy.
    """
    spec = ArchSpec(arch) if isinstance(arch, str) else arch
    if data.train.sample_shape != tuple(spec.input_shape):
        raise ShapeError(f"dataset samples {data.train.sample_shape} do not match "
                         f"{spec.name} input {tuple(spec.input_shape)}")
    net = build(spec, seed=cfg.seed)
    report = _fit(net, data, cfg)
    report.test_accuracy = evaluate(net, data.test).accuracy
    return net, report


def train_obfnet(obf_arch, infnet: Network, data: SplitDataset, cfg: TrainConfig):
    """Train an obfuscator against a frozen inference net.

    Returns (obfuscator, report).  The caller's inference net is copied,
    frozen, and verified byte-identical after training; the report's
    test accuracy is the end-to-end (obfuscate-then-classify) accuracy
    and raw_test_accuracy is the inference net alone.
    """
    spec = ArchSpec(obf_arch) if isinstance(obf_arch, str) else obf_arch
    if not spec.is_obfuscator:
        raise ShapeError(f"{spec.name} is not an obfuscator architecture")
    frozen = infnet.copy().freeze()
    before = modelio.checksum(modelio.dumps(frozen))
    obfnet = build(spec, seed=cfg.seed)
    concat = ConcatenatedModel(obfnet, frozen)
    raw_accuracy = evaluate(frozen, data.test).accuracy
    report = _fit(concat, data, cfg)
    report.test_accuracy = evaluate(concat, data.test).accuracy
    report.raw_test_accuracy = raw_accuracy
    after = modelio.checksum(modelio.dumps(concat.infnet))
    if before != after:
        raise StateError("frozen inference net changed during obfuscator training")
    return obfnet, report


def _member_filename(spec: ArchSpec, seed: int) -> str:
    width = f"-h{spec.hidden_width}" if spec.hidden_width is not None else ""
    return f"{spec.name}{width}-s{seed}.onet"


def relative_output_l2(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| scaled by the mean of ||a|| and ||b||; 0 iff identical."""
    diff = float(np.linalg.norm((a - b).ravel()))
    scale = 0.5 * (float(np.linalg.norm(a.ravel())) + float(np.linalg.norm(b.ravel())))
    if scale == 0.0:
        return 0.0
    return diff / scale


def generate_obfnet_set(obf_arch, infnet: Network, data: SplitDataset,
                        cfg: TrainConfig, count: int, out_dir,
                        drop_gate: float = DEFAULT_DROP_GATE,
                        probe_size: int = 64) -> ObfSetManifest:
    """Train `count` obfuscators from derived seeds and package them.

    Member i trains with seed cfg.seed + i.  A member whose accuracy
    drop exceeds drop_gate is retrained once with a fresh seed
    (cfg.seed + count + i); if it still fails the gate it is kept but
    recorded with status=failed.  Model files and a manifest are written
    to out_dir.
    """
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    spec = ArchSpec(obf_arch) if isinstance(obf_arch, str) else obf_arch
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    infnet_checksum = modelio.checksum(modelio.dumps(infnet))

    entries = []
    members = []
    for i in range(count):
        seed = cfg.seed + i
        obf, report = train_obfnet(spec, infnet, data, replace(cfg, seed=seed))
        status = "ok"
        if report.accuracy_drop > drop_gate:
            retry_seed = cfg.seed + count + i
            log.warning("member %d (seed %d) drop %.4f exceeds gate %.4f; "
                        "retraining with seed %d", i, seed, report.accuracy_drop,
                        drop_gate, retry_seed)
            seed = retry_seed
            obf, report = train_obfnet(spec, infnet, data, replace(cfg, seed=seed))
            if report.accuracy_drop > drop_gate:
                status = "failed"
        filename = _member_filename(spec, seed)
        modelio.save(obf, out_dir / filename)
        entries.append(ManifestEntry(
            seed=seed,
            file=filename,
            checksum=modelio.checksum(out_dir / filename),
            val_accuracy=report.best_val_accuracy,
            test_accuracy=report.test_accuracy,
            status=status,
        ))
        members.append(obf)

    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            dist = float(np.linalg.norm(
                members[i].param_vector() - members[j].param_vector()))
            if dist == 0.0:
                raise StateError(f"set members {i} and {j} have identical weights")

    min_rel_l2 = None
    probe = data.test.samples[:probe_size]
    if probe.shape[0]:
        outputs = [m.forward(probe, training=False) for m in members]
        for i in range(len(outputs)):
            for j in range(i + 1, len(outputs)):
                rel = relative_output_l2(outputs[i], outputs[j])
                min_rel_l2 = rel if min_rel_l2 is None else min(min_rel_l2, rel)

    manifest = ObfSetManifest(arch=spec.name, infnet_checksum=infnet_checksum,
                              entries=entries,
                              min_pairwise_output_rel_l2=min_rel_l2)
    manifest.save(out_dir / "manifest.txt")
    return manifest
