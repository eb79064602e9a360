"""Dataset manifest, stratified k-fold splitting, and class weights.

Samples live on disk as ``root/<label>/<id>_rgb.png`` plus
``root/<label>/<id>_rgnir.png``. Splitting is stratified per class (seeded
shuffle, then round-robin) and deliberately ignores session ids; if field
sessions correlate with disease pressure this leaks session context across
folds, which is a known validity caveat of the protocol.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LABELS = ("blast", "brown_spot", "healthy")


class ManifestError(ValueError):
    """Directory layout or manifest contents are inconsistent."""


@dataclass
class PairingRule:
    rgb_suffix: str = "_rgb.png"
    rgnir_suffix: str = "_rgnir.png"
    session_delimiter: str = "__"

    def session_of(self, sample_id: str) -> str:
        if self.session_delimiter in sample_id:
            return sample_id.split(self.session_delimiter, 1)[0]
        return ""


@dataclass
class SampleRecord:
    id: str
    rgb_path: str
    rgnir_path: str
    label: str
    session_id: str = ""
    lat: float | None = None
    lon: float | None = None


@dataclass
class Manifest:
    records: list[SampleRecord]
    counts: dict[str, int]
    checksum: str

    def __len__(self) -> int:
        return len(self.records)

    def label_index(self, record: SampleRecord) -> int:
        return LABELS.index(record.label)


def _checksum(records: list[SampleRecord]) -> str:
    digest = hashlib.sha256()
    for r in records:
        digest.update(f"{r.id},{r.label},{r.rgb_path},{r.rgnir_path}\n".encode())
    return digest.hexdigest()


def build_manifest(root_dir, pairing: PairingRule | None = None) -> Manifest:
    """Scan the class-directory layout into a deterministic manifest.

    Ordering is lexicographic by (label, id); unknown label directories and
    unpaired files are errors that name every offender.
    """
    pairing = pairing or PairingRule()
    root = Path(root_dir)
    if not root.is_dir():
        raise ManifestError(f"dataset root {root} is not a directory")

    problems: list[str] = []
    records: list[SampleRecord] = []
    seen_ids: dict[str, str] = {}
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            continue
        if entry.name not in LABELS:
            problems.append(f"unknown label directory: {entry.name}")
            continue
        rgb_ids = set()
        rgnir_ids = set()
        for f in entry.iterdir():
            if f.name.endswith(pairing.rgb_suffix):
                rgb_ids.add(f.name[:-len(pairing.rgb_suffix)])
            elif f.name.endswith(pairing.rgnir_suffix):
                rgnir_ids.add(f.name[:-len(pairing.rgnir_suffix)])
        for orphan in sorted(rgb_ids - rgnir_ids):
            problems.append(f"{entry.name}/{orphan}: RGB file without an R-G-NIR pair")
        for orphan in sorted(rgnir_ids - rgb_ids):
            problems.append(f"{entry.name}/{orphan}: R-G-NIR file without an RGB pair")
        for sample_id in sorted(rgb_ids & rgnir_ids):
            if sample_id in seen_ids:
                problems.append(
                    f"duplicate id {sample_id} in {entry.name} and {seen_ids[sample_id]}")
                continue
            seen_ids[sample_id] = entry.name
            records.append(SampleRecord(
                id=sample_id,
                rgb_path=str(entry / f"{sample_id}{pairing.rgb_suffix}"),
                rgnir_path=str(entry / f"{sample_id}{pairing.rgnir_suffix}"),
                label=entry.name,
                session_id=pairing.session_of(sample_id),
            ))
    if problems:
        raise ManifestError("manifest build failed:\n  " + "\n  ".join(problems))

    records.sort(key=lambda r: (r.label, r.id))
    counts = {label: 0 for label in LABELS}
    for r in records:
        counts[r.label] += 1
    return Manifest(records=records, counts=counts, checksum=_checksum(records))


@dataclass
class FoldAssignment:
    k: int
    seed: int
    fold_of: dict[str, int] = field(default_factory=dict)

    def fold_ids(self, manifest: Manifest, fold: int) -> list[str]:
        return [r.id for r in manifest.records if self.fold_of[r.id] == fold]


def stratified_kfold(manifest: Manifest, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Per-class seeded shuffle followed by round-robin fold assignment.

    Guarantees per-fold per-class counts within +-1 of n_c / k.
    """
    if k < 1:
        raise ManifestError(f"k must be >= 1, got {k}")
    assignment = FoldAssignment(k=k, seed=seed)
    for ci, label in enumerate(LABELS):
        ids = sorted(r.id for r in manifest.records if r.label == label)
        if len(ids) < k:
            raise ManifestError(
                f"class {label} has {len(ids)} samples; cannot split into {k} folds")
        rng = np.random.default_rng([seed, ci])
        order = rng.permutation(len(ids))
        for position, idx in enumerate(order):
            assignment.fold_of[ids[idx]] = position % k
    return assignment


def class_weights_from_counts(counts: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights w_c = N / (K * n_c); uniform counts give ones."""
    counts = np.asarray(counts, dtype=np.float64)
    if (counts <= 0).any():
        raise ManifestError(f"class weights need positive counts, got {counts}")
    total = counts.sum()
    return total / (len(counts) * counts)


def class_weights(manifest: Manifest) -> np.ndarray:
    counts = np.array([manifest.counts[label] for label in LABELS])
    return class_weights_from_counts(counts)


MANIFEST_HEADER = ["id", "rgb_path", "rgnir_path", "label", "session_id", "lat", "lon"]


def write_manifest_csv(manifest: Manifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in manifest.records:
            writer.writerow([r.id, r.rgb_path, r.rgnir_path, r.label, r.session_id,
                             "" if r.lat is None else repr(r.lat),
                             "" if r.lon is None else repr(r.lon)])


def read_manifest_csv(path) -> Manifest:
    records: list[SampleRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ManifestError(f"{path}: unexpected manifest header {header}")
        for row in reader:
            sid, rgb, rgnir, label, session, lat, lon = row
            if label not in LABELS:
                raise ManifestError(f"{path}: unknown label {label!r} for id {sid}")
            records.append(SampleRecord(
                id=sid, rgb_path=rgb, rgnir_path=rgnir, label=label,
                session_id=session,
                lat=float(lat) if lat else None,
                lon=float(lon) if lon else None))
    counts = {label: 0 for label in LABELS}
    for r in records:
        counts[r.label] += 1
    return Manifest(records=records, counts=counts, checksum=_checksum(records))


def write_folds_csv(assignment: FoldAssignment, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "fold"])
        for sample_id in sorted(assignment.fold_of):
            writer.writerow([sample_id, assignment.fold_of[sample_id]])


def read_folds_csv(path, k: int | None = None, seed: int = 0) -> FoldAssignment:
    fold_of: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "fold"]:
            raise ManifestError(f"{path}: unexpected folds header {header}")
        for sid, fold in reader:
            fold_of[sid] = int(fold)
    inferred_k = (max(fold_of.values()) + 1) if fold_of else 0
    return FoldAssignment(k=k or inferred_k, seed=seed, fold_of=fold_of)
