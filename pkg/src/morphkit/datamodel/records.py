"""Sample records and dataset manifests.

A manifest is a JSONL file, one record per line, describing one image each.
Records carry the dataset of origin, a class label (``bona_fide`` or a morph
generator identifier), an optional train/test split tag and optional eye
landmark coordinates used for face alignment.
"""

import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

BONA_FIDE = "bona_fide"


class Dataset(str, Enum):
    FERET = "FERET"
    FRGC = "FRGC"
    FRLL = "FRLL"
    CELEBA = "CelebA"
    DOPPELGANGER = "Doppelganger"
    SYNTHETIC = "Synthetic"


_DATASET_VALUES = {d.value: d for d in Dataset}


class ManifestError(ValueError):
    """Raised for structurally invalid manifests or records."""


@dataclass(frozen=True)
class SampleRecord:
    """One image in a dataset manifest.

    ``class_label`` is ``bona_fide`` for genuine images, otherwise the
    identifier of the morph generator that produced the image.  Eye
    coordinates are (x, y) pixel positions when known.
    """

    path: str
    dataset: Dataset
    class_label: str
    split: Optional[str] = None
    width: Optional[int] = None
    height: Optional[int] = None
    eye_left: Optional[Tuple[float, float]] = None
    eye_right: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not self.path:
            raise ManifestError("record has empty path")
        if not isinstance(self.dataset, Dataset):
            raise ManifestError("dataset must be a Dataset enum value, got %r" % (self.dataset,))
        if not self.class_label:
            raise ManifestError("record has empty class_label")
        if self.split is not None and self.split not in ("train", "test"):
            raise ManifestError("split must be train or test, got %r" % (self.split,))
        for name in ("eye_left", "eye_right"):
            eye = getattr(self, name)
            if eye is not None and len(eye) != 2:
                raise ManifestError("%s must be an (x, y) pair, got %r" % (name, eye))

    @property
    def sample_id(self) -> str:
        """Stable identifier, unique within a merged manifest."""
        return "%s:%s" % (self.dataset.value, self.path)

    @property
    def is_bona_fide(self) -> bool:
        return self.class_label == BONA_FIDE

    def with_split(self, split: str) -> "SampleRecord":
        return replace(self, split=split)

    def to_dict(self) -> dict:
        out = {"path": self.path, "dataset": self.dataset.value, "class_label": self.class_label}
        if self.split is not None:
            out["split"] = self.split
        if self.width is not None:
            out["width"] = self.width
        if self.height is not None:
            out["height"] = self.height
        if self.eye_left is not None:
            out["eye_left"] = list(self.eye_left)
        if self.eye_right is not None:
            out["eye_right"] = list(self.eye_right)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        try:
            path = d["path"]
            dataset = d["dataset"]
            class_label = d["class_label"]
        except KeyError as e:
            raise ManifestError("record missing required key %s: %r" % (e, d)) from None
        if dataset not in _DATASET_VALUES:
            raise ManifestError("unknown dataset %r (expected one of %s)"
                                % (dataset, sorted(_DATASET_VALUES)))
        eye_left = d.get("eye_left")
        eye_right = d.get("eye_right")
        return cls(
            path=path,
            dataset=_DATASET_VALUES[dataset],
            class_label=class_label,
            split=d.get("split"),
            width=d.get("width"),
            height=d.get("height"),
            eye_left=tuple(eye_left) if eye_left is not None else None,
            eye_right=tuple(eye_right) if eye_right is not None else None,
        )


@dataclass(frozen=True)
class DatasetManifest:
    """An immutable collection of sample records plus the declared label set.

    The label set always contains ``bona_fide`` first, followed by the morph
    labels in lexicographic order.
    """

    name: str
    records: Tuple[SampleRecord, ...]
    label_set: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.sample_id in seen:
                raise ManifestError("duplicate record %s" % r.sample_id)
            seen.add(r.sample_id)
        labels = set(self.label_set)
        for r in self.records:
            if r.class_label not in labels:
                raise ManifestError("record %s has label %r outside the declared label set %s"
                                    % (r.sample_id, r.class_label, sorted(labels)))

    @classmethod
    def from_records(cls, name: str, records: Iterable[SampleRecord]) -> "DatasetManifest":
        records = tuple(records)
        if not records:
            raise ManifestError("empty manifest %r" % name)
        labels = sorted({r.class_label for r in records})
        if BONA_FIDE in labels:
            labels.remove(BONA_FIDE)
            labels.insert(0, BONA_FIDE)
        return cls(name=name, records=records, label_set=tuple(labels))

    def __len__(self) -> int:
        return len(self.records)

    def by_label(self, label: str) -> Tuple[SampleRecord, ...]:
        return tuple(r for r in self.records if r.class_label == label)

    @property
    def morph_labels(self) -> Tuple[str, ...]:
        return tuple(l for l in self.label_set if l != BONA_FIDE)

    def counts(self) -> dict:
        out = {l: 0 for l in self.label_set}
        for r in self.records:
            out[r.class_label] += 1
        return out


def merge_manifests(manifests: Sequence[DatasetManifest], name: str = "merged") -> DatasetManifest:
    records = []
    for m in manifests:
        records.extend(m.records)
    return DatasetManifest.from_records(name, records)


def load_manifest(path: str, name: Optional[str] = None,
                  check_paths: bool = True) -> DatasetManifest:
    """Load a JSONL manifest from disk.

    Raises FileNotFoundError for a missing manifest, ManifestError for an
    empty manifest, a malformed line, a missing key, an unknown dataset
    value or a duplicate record.  With ``check_paths`` each referenced image
    path must exist (relative paths resolve against the manifest directory).
    """
    if not os.path.isfile(path):
        raise FileNotFoundError("manifest not found: %s" % path)
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError("malformed record at %s:%d: %s" % (path, lineno, e)) from None
            rec = SampleRecord.from_dict(d)
            if not os.path.isabs(rec.path):
                rec = replace(rec, path=os.path.normpath(os.path.join(base, rec.path)))
            if check_paths and not os.path.isfile(rec.path):
                raise ManifestError("image referenced at %s:%d does not exist: %s"
                                    % (path, lineno, rec.path))
            records.append(rec)
    if not records:
        raise ManifestError("empty manifest: %s" % path)
    return DatasetManifest.from_records(name or os.path.basename(path), records)


def save_manifest(manifest: DatasetManifest, path: str, relative_to: Optional[str] = None):
    """Write a manifest as JSONL. Paths can be stored relative to a base dir."""
    with open(path, "w", encoding="utf-8") as f:
        for r in manifest.records:
            d = r.to_dict()
            if relative_to is not None:
                d["path"] = os.path.relpath(r.path, relative_to)
            f.write(json.dumps(d, sort_keys=True) + "\n")
