"""ECG records, the manifest/signal-file format, and dataset summaries.

Manifest (UTF-8 JSON)::

    {"version": 1, "sampling_rate_hz": 100, "num_samples": 1000,
     "records": [{"id": "00001", "file": "signals/00001.f32",
                  "labels": ["NSR"], "partition": "development"}, ...]}

Each signal file holds ``12 * num_samples`` little-endian float32 values,
lead-major (all of lead I, then lead II, ...), with no header. File paths
are relative to the manifest directory.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import CLASS_INDEX, CLASSES, LEADS
from .errors import DatasetError, DimensionError, LabelError

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
PARTITIONS = ("development", "test")


@dataclass
class EcgRecord:
    id: str
    signal: np.ndarray          # (12, T) float32
    labels: np.ndarray          # (5,) uint8 over CLASSES
    sampling_rate: float = 100.0
    partition: str = "development"

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.signal.ndim != 2 or self.signal.shape[0] != len(LEADS):
            raise DimensionError(f"record {self.id}: expected 12 x T signal, got shape {self.signal.shape}")
        if self.labels.shape != (len(CLASSES),) or not np.isin(self.labels, (0, 1)).all():
            raise LabelError(f"record {self.id}: labels must be a 0/1 vector of length {len(CLASSES)}")
        if not self.labels.any():
            raise LabelError(f"record {self.id}: no diagnostic label set")
        if self.partition not in PARTITIONS:
            raise DatasetError(f"record {self.id}: unknown partition {self.partition!r}")

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    @property
    def label_tokens(self) -> list[str]:
        return [c for c, bit in zip(CLASSES, self.labels) if bit]


def labels_from_tokens(tokens, record_id: str = "?") -> np.ndarray:
    out = np.zeros(len(CLASSES), dtype=np.uint8)
    for tok in tokens:
        if tok not in CLASS_INDEX:
            raise LabelError(f"record {record_id}: unknown label token {tok!r}")
        out[CLASS_INDEX[tok]] = 1
    return out


def stack(records: list[EcgRecord]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Records -> ``(X (N, 12, T), Y (N, 5), ids)``."""
    if not records:
        return np.zeros((0, len(LEADS), 0), np.float32), np.zeros((0, len(CLASSES)), np.uint8), []
    X = np.stack([r.signal for r in records])
    Y = np.stack([r.labels for r in records])
    return X, Y, [r.id for r in records]


def by_partition(records: list[EcgRecord], partition: str) -> list[EcgRecord]:
    return [r for r in records if r.partition == partition]


def save_dataset(records: list[EcgRecord], manifest_path, signal_dir: str = "signals") -> Path:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    (root / signal_dir).mkdir(parents=True, exist_ok=True)
    lengths = {r.n_samples for r in records}
    rates = {r.sampling_rate for r in records}
    if len(lengths) > 1 or len(rates) > 1:
        raise DatasetError("all records in one manifest must share length and sampling rate")
    entries = []
    for r in records:
        rel = f"{signal_dir}/{r.id}.f32"
        (root / rel).write_bytes(np.ascontiguousarray(r.signal, dtype="<f4").tobytes())
        entries.append({"id": r.id, "file": rel, "labels": r.label_tokens, "partition": r.partition})
    manifest = {
        "version": MANIFEST_VERSION,
        "sampling_rate_hz": rates.pop() if rates else 100.0,
        "num_samples": lengths.pop() if lengths else 0,
        "records": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest_path


def load_dataset(manifest_path) -> list[EcgRecord]:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for key in ("version", "sampling_rate_hz", "num_samples", "records"):
        if key not in manifest:
            raise DatasetError(f"{manifest_path}: missing field {key!r}")
    if manifest["version"] != MANIFEST_VERSION:
        raise DatasetError(f"{manifest_path}: unsupported manifest version {manifest['version']}")
    fs = float(manifest["sampling_rate_hz"])
    T = int(manifest["num_samples"])
    entries = manifest["records"]
    if entries and T < 1:
        raise DatasetError(f"{manifest_path}: num_samples must be >= 1, got {T}")
    if not entries:
        log.warning("manifest %s lists no records", manifest_path)
        return []
    root = manifest_path.parent
    seen: set[str] = set()
    records = []
    for e in entries:
        rid = str(e["id"])
        if rid in seen:
            raise DatasetError(f"duplicate record id {rid!r}")
        seen.add(rid)
        path = root / e["file"]
        if not path.is_file():
            raise FileNotFoundError(f"record {rid}: signal file not found: {path}")
        raw = np.fromfile(path, dtype="<f4")
        if raw.size % T or raw.size // T != len(LEADS):
            raise DimensionError(
                f"record {rid}: signal has {raw.size} values, expected 12 leads x {T} samples")
        records.append(EcgRecord(rid, raw.reshape(len(LEADS), T), labels_from_tokens(e["labels"], rid),
                                 fs, e.get("partition", "development")))
    return records


def partition_counts(records: list[EcgRecord]) -> dict[str, dict[str, int]]:
    """Per-partition label-instance counts and label-cardinality counts.

    Keys per partition: each class name, ``label_instances`` (sum over classes),
    ``One-label`` ... ``Five-label`` and ``records``.
    """
    names = ("One", "Two", "Three", "Four", "Five")
    table: dict[str, dict[str, int]] = {}
    for part in PARTITIONS:
        rs = by_partition(records, part)
        row: dict[str, int] = {c: 0 for c in CLASSES}
        card = Counter()
        for r in rs:
            for c in r.label_tokens:
                row[c] += 1
            card[int(r.labels.sum())] += 1
        row["label_instances"] = sum(row[c] for c in CLASSES)
        for k, name in enumerate(names, start=1):
            row[f"{name}-label"] = card[k]
        row["records"] = len(rs)
        table[part] = row
    return table
