"""
Memory-dump datasets: a JSON manifest plus raw, headerless dump files.

Manifest layout::

    {
      "format": "ntfp-dataset",
      "version": 1,
      "chips": [
        {
          "chip_id": "nordic-0",
          "memory_size_bytes": 65536,
          "enroll_condition": "25C",
          "conditions": {"25C": ["nordic-0/25C_000.bin", ...], "85C": [...]}
        }
      ]
    }

Dump paths are relative to the manifest's directory. The first file of the
enrolling condition is the t=0 enrollment snapshot; every other file gets
t = 1, 2, ... in manifest order (enrolling condition first, then the others
as listed).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import MemorySnapshot, TransformParams, bytes_to_bits, enroll, fhd
from .errors import InsufficientData, InvalidArgument, MalformedManifest, MissingDumpFile, SizeMismatch

MANIFEST_FORMAT = "ntfp-dataset"
MANIFEST_VERSION = 1


@dataclass
class ChipRecord:
    chip_id: str
    memory_size_bits: int
    enroll_condition: str
    conditions: dict[str, list[MemorySnapshot]] = field(default_factory=dict)

    @property
    def enrollment(self) -> MemorySnapshot:
        return self.conditions[self.enroll_condition][0]

    def remeasurements(self, condition: str) -> list[MemorySnapshot]:
        snaps = self.conditions[condition]
        return snaps[1:] if condition == self.enroll_condition else list(snaps)

    def snapshot_count(self) -> int:
        return sum(len(v) for v in self.conditions.values())


@dataclass
class Dataset:
    chips: dict[str, ChipRecord] = field(default_factory=dict)

    def chip(self, chip_id: str) -> ChipRecord:
        try:
            return self.chips[chip_id]
        except KeyError:
            raise InvalidArgument(f"unknown chip {chip_id!r}") from None


def write_dump(path, snapshot_or_bits) -> None:
    bits = snapshot_or_bits.bits if isinstance(snapshot_or_bits, MemorySnapshot) else snapshot_or_bits
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise InvalidArgument("dump length must be a whole number of bytes")
    Path(path).write_bytes(np.packbits(bits, bitorder="little").tobytes())


def read_dump(path, expected_bytes: int | None = None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingDumpFile(f"dump file not found: {path}")
    data = path.read_bytes()
    if expected_bytes is not None and len(data) != expected_bytes:
        raise SizeMismatch(path, expected_bytes, len(data))
    return bytes_to_bits(data)


def _require(cond: bool, msg: str):
    if not cond:
        raise MalformedManifest(msg)


def _parse_chip(entry, base: Path) -> ChipRecord:
    _require(isinstance(entry, dict), "chip entry must be an object")
    for key in ("chip_id", "memory_size_bytes", "enroll_condition", "conditions"):
        _require(key in entry, f"chip entry missing {key!r}")
    chip_id = entry["chip_id"]
    size = entry["memory_size_bytes"]
    enroll_cond = entry["enroll_condition"]
    conds = entry["conditions"]
    _require(isinstance(chip_id, str) and chip_id, "chip_id must be a non-empty string")
    _require(isinstance(size, int) and not isinstance(size, bool) and size > 0,
             f"{chip_id}: memory_size_bytes must be a positive integer")
    _require(isinstance(conds, dict) and conds, f"{chip_id}: conditions must be a non-empty object")
    _require(enroll_cond in conds, f"{chip_id}: enroll_condition {enroll_cond!r} not among conditions")
    for label, files in conds.items():
        _require(isinstance(files, list) and all(isinstance(f, str) for f in files),
                 f"{chip_id}/{label}: expected a list of file names")
    _require(len(conds[enroll_cond]) >= 1, f"{chip_id}: enrolling condition has no dumps")

    order = [enroll_cond] + [c for c in conds if c != enroll_cond]
    t = 0
    loaded: dict[str, list[MemorySnapshot]] = {}
    for label in order:
        snaps = []
        for name in conds[label]:
            bits = read_dump(base / name, size)
            snaps.append(MemorySnapshot(bits, chip_id=chip_id, condition=label, t_index=t))
            t += 1
        loaded[label] = snaps
    # keep the manifest's condition order for reporting
    return ChipRecord(chip_id, size * 8, enroll_cond, {c: loaded[c] for c in conds})


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingDumpFile(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedManifest(f"{manifest_path}: not valid JSON ({exc})") from None
    _require(isinstance(doc, dict), "manifest root must be an object")
    _require(doc.get("format") == MANIFEST_FORMAT, f"manifest format must be {MANIFEST_FORMAT!r}")
    _require(doc.get("version") == MANIFEST_VERSION, f"unsupported manifest version {doc.get('version')!r}")
    chips = doc.get("chips")
    _require(isinstance(chips, list) and chips, "manifest needs a non-empty 'chips' list")
    ds = Dataset()
    for entry in chips:
        rec = _parse_chip(entry, manifest_path.parent)
        _require(rec.chip_id not in ds.chips, f"duplicate chip_id {rec.chip_id!r}")
        ds.chips[rec.chip_id] = rec
    return ds


def manifest_text(chips: list[dict]) -> str:
    """Canonical manifest text: insertion-ordered keys, 2-space indent, trailing newline."""
    doc = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, "chips": chips}
    return json.dumps(doc, indent=2) + "\n"


def write_dataset(directory, chips: dict[str, dict[str, list]], enroll_conditions: dict[str, str] | None = None):
    """Write dumps and a manifest.

    ``chips`` maps chip_id to {condition: [snapshot or bit array, ...]}. The
    enrolling condition defaults to the first one listed. Returns the manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for chip_id, conds in chips.items():
        enroll_cond = (enroll_conditions or {}).get(chip_id, next(iter(conds)))
        size = None
        files: dict[str, list[str]] = {}
        for label, snaps in conds.items():
            names = []
            for i, snap in enumerate(snaps):
                rel = f"{chip_id}/{label}_{i:03d}.bin"
                (directory / chip_id).mkdir(exist_ok=True)
                write_dump(directory / rel, snap)
                nbytes = os.path.getsize(directory / rel)
                if size is None:
                    size = nbytes
                elif nbytes != size:
                    raise InvalidArgument(f"{chip_id}: snapshots differ in size")
                names.append(rel)
            files[label] = names
        entries.append({"chip_id": chip_id, "memory_size_bytes": size,
                        "enroll_condition": enroll_cond, "conditions": files})
    path = directory / "manifest.json"
    path.write_text(manifest_text(entries), encoding="utf-8")
    return path


def export_sim_dataset(directory, chip, measurements: int, condition: str = "sim"):
    """Write a simulated chip's enrollment plus ``measurements`` noisy re-reads."""
    from .chipsim import remeasure

    snaps = [chip.enrollment] + [remeasure(chip, t) for t in range(1, measurements + 1)]
    return write_dataset(directory, {chip.chip_id: {condition: snaps}})


@dataclass(frozen=True)
class BerProfile:
    chip_id: str
    per_condition: dict
    worst_ber_f: float
    worst_condition: str

    def to_record(self) -> dict:
        return {"chip_id": self.chip_id, "per_condition": dict(self.per_condition),
                "worst_ber_f": self.worst_ber_f, "worst_condition": self.worst_condition}


def characterize_ber(dataset: Dataset, chip_id: str) -> BerProfile:
    """Mean FHD to the enrollment snapshot, per condition, and the worst of those."""
    chip = dataset.chip(chip_id)
    if chip.snapshot_count() < 2:
        raise InsufficientData(f"{chip_id}: need at least two snapshots to measure BER")
    ref = chip.enrollment.bits
    per = {}
    for label in chip.conditions:
        snaps = chip.remeasurements(label)
        if snaps:
            per[label] = math.fsum(fhd(ref, s.bits) for s in snaps) / len(snaps)
    worst = max(per, key=per.get)
    return BerProfile(chip_id, per, per[worst], worst)


def measured_efficiency(dataset: Dataset, chip_id: str, params: TransformParams) -> float:
    """Selected transformed bits per KiB of the chip's enrollment snapshot."""
    chip = dataset.chip(chip_id)
    if params.unit_bits > chip.memory_size_bits:
        raise InvalidArgument(f"{params} needs {params.unit_bits} bits; chip has {chip.memory_size_bits}")
    mask, _ = enroll(chip.enrollment, params)
    return len(mask) / (chip.memory_size_bits / 8192)
