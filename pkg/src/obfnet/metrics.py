"""Quantitative proxies for obfuscation quality, plus image dumps.

Human listening/viewing studies are not reproducible in an automated
suite, so obfuscation quality is summarized by three proxies instead:

  * mean absolute per-sample Pearson correlation between a sample and
    its obfuscated form (flattened) -- low means the raw structure is
    not linearly visible in the output;
  * mean absolute difference of 32-bin normalized value histograms --
    low means value distributions were reshaped;
  * mean pairwise relative L2 distance between the outputs of different
    obfuscators on the same probe batch -- high means members of a set
    are genuinely distinct.

The thresholds used in the acceptance suite are engineering choices,
reported alongside the raw values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data.dataset import Dataset
from .errors import DataError, ShapeError
from .training import relative_output_l2

HISTOGRAM_BINS = 32


def abs_pearson(x: np.ndarray, y: np.ndarray) -> float:
    """|Pearson r| of two flattened arrays; zero-variance vectors give 0."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    xd = x - x.mean()
    yd = y - y.mean()
    sx = np.sqrt((xd * xd).sum())
    sy = np.sqrt((yd * yd).sum())
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(abs((xd * yd).sum() / (sx * sy)))


def histogram_distance(x: np.ndarray, y: np.ndarray, bins=HISTOGRAM_BINS) -> float:
    """Mean absolute difference of normalized histograms over a shared range."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if hi <= lo:
        hi = lo + 1.0
    hx, _ = np.histogram(x, bins=bins, range=(lo, hi))
    hy, _ = np.histogram(y, bins=bins, range=(lo, hi))
    hx = hx / hx.sum()
    hy = hy / hy.sum()
    return float(np.abs(hx - hy).mean())


@dataclass
class ObfuscationReport:
    mean_abs_correlation: float
    mean_histogram_distance: float
    mean_pairwise_distinctness: float | None
    min_pairwise_distinctness: float | None
    probe_size: int
    per_model: list = field(default_factory=list)  # (correlation, histogram) pairs

    def to_text(self, path):
        lines = [f"probe_size: {self.probe_size}",
                 f"mean_abs_correlation: {self.mean_abs_correlation:.6f}",
                 f"mean_histogram_distance: {self.mean_histogram_distance:.6f}"]
        if self.mean_pairwise_distinctness is not None:
            lines.append(
                f"mean_pairwise_distinctness: {self.mean_pairwise_distinctness:.6f}")
            lines.append(
                f"min_pairwise_distinctness: {self.min_pairwise_distinctness:.6f}")
        for i, (corr, hist) in enumerate(self.per_model):
            lines.append(f"model.{i}.abs_correlation: {corr:.6f}")
            lines.append(f"model.{i}.histogram_distance: {hist:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_json(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


def obfuscation_report(obfnets, probe: Dataset, bins=HISTOGRAM_BINS) -> ObfuscationReport:
    """Compute the proxies over a probe split, in inference mode."""
    if isinstance(obfnets, (list, tuple)):
        nets = list(obfnets)
    else:
        nets = [obfnets]
    if len(probe) == 0:
        raise DataError("probe split is empty")
    samples = probe.samples
    per_model = []
    outputs = []
    for net in nets:
        if tuple(net.input_shape) != tuple(probe.sample_shape):
            raise ShapeError(f"obfuscator input {net.input_shape} does not match "
                             f"probe samples {probe.sample_shape}")
        out = net.forward(samples, training=False)
        outputs.append(out)
        corrs = [abs_pearson(samples[i], out[i]) for i in range(len(probe))]
        hists = [histogram_distance(samples[i], out[i], bins) for i in range(len(probe))]
        per_model.append((float(np.mean(corrs)), float(np.mean(hists))))

    mean_dist = min_dist = None
    if len(nets) > 1:
        pair_dists = []
        for i in range(len(outputs)):
            for j in range(i + 1, len(outputs)):
                pair_dists.append(relative_output_l2(outputs[i], outputs[j]))
        mean_dist = float(np.mean(pair_dists))
        min_dist = float(np.min(pair_dists))

    return ObfuscationReport(
        mean_abs_correlation=float(np.mean([c for c, _ in per_model])),
        mean_histogram_distance=float(np.mean([h for _, h in per_model])),
        mean_pairwise_distinctness=mean_dist,
        min_pairwise_distinctness=min_dist,
        probe_size=len(probe),
        per_model=per_model,
    )


def _to_tile(image: np.ndarray) -> np.ndarray:
    """Min-max normalize one tile to uint8 [0, 255]."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi > lo:
        image = (image - lo) / (hi - lo)
    else:
        image = np.zeros_like(image)
    return np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray):
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ShapeError(f"PGM output needs a 2-D array, got shape {image.shape}")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM file")
    parts = data.split(b"\n", 3)
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=width * height)
    return pixels.reshape(height, width)


def dump_obfuscated_grid(obfnets, samples: np.ndarray, path, pad=2):
    """Write a PGM grid: top row originals, one row per obfuscator below.

    Tiles are min-max normalized individually; separators are white.
    Deterministic: same inputs and models give a bit-identical file.
    """
    nets = list(obfnets) if isinstance(obfnets, (list, tuple)) else [obfnets]
    samples = np.asarray(samples, dtype=np.float32)
    if samples.ndim != 3:
        raise ShapeError(f"expected (N, H, W) image samples, got shape {samples.shape}")
    rows = [samples]
    for net in nets:
        rows.append(net.forward(samples, training=False))
    n, h, w = samples.shape
    grid_h = len(rows) * h + (len(rows) - 1) * pad
    grid_w = n * w + (n - 1) * pad
    grid = np.full((grid_h, grid_w), 255, dtype=np.uint8)
    for r, row in enumerate(rows):
        for c in range(n):
            top = r * (h + pad)
            left = c * (w + pad)
            grid[top:top + h, left:left + w] = _to_tile(row[c])
    write_pgm(path, grid)
    return Path(path)
