"""Obfuscator-set manifest: which model files a device received.

Stored as a flat human-readable key: value text file next to the model
files themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import modelio
from .errors import DataError

FORMAT_LINE = "obfnet-set-manifest-v1"


@dataclass
class ManifestEntry:
    seed: int
    file: str
    checksum: str
    val_accuracy: float
    test_accuracy: float
    status: str = "ok"


@dataclass
class ObfSetManifest:
    arch: str
    infnet_checksum: str
    entries: list = field(default_factory=list)
    min_pairwise_output_rel_l2: float | None = None

    def __post_init__(self):
        seen = {e.checksum for e in self.entries}
        if len(seen) != len(self.entries):
            raise DataError("manifest entries must have distinct checksums")

    def save(self, path):
        lines = [f"format: {FORMAT_LINE}",
                 f"arch: {self.arch}",
                 f"infnet_checksum: {self.infnet_checksum}",
                 f"members: {len(self.entries)}"]
        if self.min_pairwise_output_rel_l2 is not None:
            lines.append(
                f"min_pairwise_output_rel_l2: {self.min_pairwise_output_rel_l2:.6f}")
        for i, e in enumerate(self.entries):
            lines += [f"member.{i}.seed: {e.seed}",
                      f"member.{i}.file: {e.file}",
                      f"member.{i}.checksum: {e.checksum}",
                      f"member.{i}.val_accuracy: {e.val_accuracy:.6f}",
                      f"member.{i}.test_accuracy: {e.test_accuracy:.6f}",
                      f"member.{i}.status: {e.status}"]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        kv = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key: value'")
            key, value = line.split(":", 1)
            kv[key.strip()] = value.strip()
        if kv.get("format") != FORMAT_LINE:
            raise DataError(f"{path}: not a {FORMAT_LINE} file")
        entries = []
        for i in range(int(kv["members"])):
            entries.append(ManifestEntry(
                seed=int(kv[f"member.{i}.seed"]),
                file=kv[f"member.{i}.file"],
                checksum=kv[f"member.{i}.checksum"],
                val_accuracy=float(kv[f"member.{i}.val_accuracy"]),
                test_accuracy=float(kv[f"member.{i}.test_accuracy"]),
                status=kv[f"member.{i}.status"],
            ))
        rel_l2 = kv.get("min_pairwise_output_rel_l2")
        return cls(arch=kv["arch"], infnet_checksum=kv["infnet_checksum"],
                   entries=entries,
                   min_pairwise_output_rel_l2=float(rel_l2) if rel_l2 else None)

    def ok_entries(self):
        return [e for e in self.entries if e.status == "ok"]

    def load_networks(self, base_dir, verify=True, include_failed=False):
        """Load the member model files, checking stored checksums."""
        base_dir = Path(base_dir)
        nets = []
        entries = self.entries if include_failed else self.ok_entries()
        for e in entries:
            data = (base_dir / e.file).read_bytes()
            if verify and modelio.checksum(data) != e.checksum:
                raise DataError(f"{e.file}: checksum does not match manifest")
            nets.append(modelio.loads(data))
        return nets
