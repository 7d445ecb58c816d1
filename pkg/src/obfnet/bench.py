"""Inference timing harness.

Per configuration the model runs a few untimed warm-up passes, then
`runs` timed passes; per-sample time is wall time divided by batch
size.  Absolute numbers are hardware-specific; the interesting output
is the trend across batch sizes.
"""

from __future__ import annotations

import csv
import platform
import time
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_RUNS = 100
WARMUP_RUNS = 5

CSV_HEADER = ["model", "batch_size", "runs",
              "per_sample_min_s", "per_sample_avg_s", "per_sample_max_s", "host"]


def host_description() -> str:
    return f"{platform.platform()} / {platform.processor() or 'unknown cpu'}"


@dataclass
class BenchReport:
    model_name: str
    batch_size: int
    runs: int
    per_sample_min: float
    per_sample_avg: float
    per_sample_max: float
    host: str

    def __post_init__(self):
        if not (self.per_sample_min <= self.per_sample_avg <= self.per_sample_max):
            raise DataError("timing summary must satisfy min <= avg <= max")


def bench_model(net, batch_sizes, runs=DEFAULT_RUNS, warmup=WARMUP_RUNS,
                seed=0) -> list[BenchReport]:
    """Time inference-mode forward passes over a list of batch sizes."""
    rng = np.random.default_rng(seed)
    host = host_description()
    reports = []
    for batch_size in batch_sizes:
        if batch_size < 1:
            raise DataError(f"batch size must be >= 1, got {batch_size}")
        batch = rng.random((batch_size,) + net.input_shape, dtype=np.float32)
        for _ in range(warmup):
            net.forward(batch, training=False)
        times = np.empty(runs)
        for i in range(runs):
            start = time.perf_counter()
            net.forward(batch, training=False)
            times[i] = time.perf_counter() - start
        per_sample = times / batch_size
        reports.append(BenchReport(
            model_name=net.name or "unnamed",
            batch_size=int(batch_size),
            runs=runs,
            per_sample_min=float(per_sample.min()),
            per_sample_avg=float(per_sample.mean()),
            per_sample_max=float(per_sample.max()),
            host=host,
        ))
    return reports


def write_bench_csv(reports, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in reports:
            writer.writerow([r.model_name, r.batch_size, r.runs,
                             f"{r.per_sample_min:.9f}", f"{r.per_sample_avg:.9f}",
                             f"{r.per_sample_max:.9f}", r.host])
