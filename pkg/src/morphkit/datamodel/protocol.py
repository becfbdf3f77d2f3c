"""Few-shot evaluation protocols.

Two tasks are supported:

* detection (``fsmad``): binary bona fide vs morph, where training sees all
  samples of a set of predefined morph generators but only ``shots`` samples
  per novel generator.  Evaluation runs on the remaining novel-generator
  morphs and the bona fide images of the datasets hosting them.
* fingerprinting (``fsmaf``): multi-class attribution over bona fide plus
  every morph generator, with an 80:20 class-stratified partition.  The
  episodic learner sees only ``shots`` samples per class from the train
  partition; the test partition is balanced by downsampling each class to
  the minimum class count.

Splits are pure functions of (manifests, shots, seed).
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .records import BONA_FIDE, DatasetManifest, SampleRecord

TASKS = ("fsmad", "fsmaf")

# Benchmark defaults: generators whose output is plentiful at train time vs
# generators treated as novel, seen only through a handful of shots.
PREDEFINED_MORPH_LABELS = ("AMSL", "FaceMorpher", "OpenCV", "StyleGAN2", "WebMorph")
NOVEL_MORPH_LABELS = ("CIEMorGAN", "LMA", "MorGAN")


class ProtocolError(ValueError):
    """Raised when a manifest cannot support the requested protocol."""


@dataclass(frozen=True)
class ProtocolSplit:
    """A frozen train/test assignment.

    ``pretrain_records`` feed representation learning (residual nets and the
    fusion coder classifier); ``train_records`` feed the episodic few-shot
    learner; ``test_records`` are held out for evaluation.  For ``fsmad``
    the class list is always ``[bona_fide, morph]`` and every non-bona-fide
    label maps to class 1.  For ``fsmaf`` classes are the manifest labels.
    """

    task: str
    shots: int
    seed: int
    class_labels: Tuple[str, ...]
    pretrain_records: Tuple[SampleRecord, ...]
    train_records: Tuple[SampleRecord, ...]
    test_records: Tuple[SampleRecord, ...]

    def __post_init__(self):
        if self.task not in TASKS:
            raise ProtocolError("unknown task %r" % self.task)
        if self.shots < 0:
            raise ProtocolError("shots must be >= 0")
        if not self.train_records or not self.test_records:
            raise ProtocolError("split has an empty partition")
        train_ids = {r.sample_id for r in self.train_records}
        for r in self.test_records:
            if r.sample_id in train_ids:
                raise ProtocolError("record %s appears in both train and test" % r.sample_id)

    @property
    def num_classes(self) -> int:
        return len(self.class_labels)

    def label_index(self, class_label: str) -> int:
        """Map a record label to its class index under this protocol."""
        if self.task == "fsmad":
            return 0 if class_label == BONA_FIDE else 1
        try:
            return self.class_labels.index(class_label)
        except ValueError:
            raise ProtocolError("label %r not in protocol classes %s"
                                % (class_label, self.class_labels)) from None

    def targets(self, records: Sequence[SampleRecord]) -> np.ndarray:
        return np.array([self.label_index(r.class_label) for r in records], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "shots": self.shots,
            "seed": self.seed,
            "class_labels": list(self.class_labels),
            "pretrain_records": [r.to_dict() for r in self.pretrain_records],
            "train_records": [r.to_dict() for r in self.train_records],
            "test_records": [r.to_dict() for r in self.test_records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolSplit":
        return cls(
            task=d["task"], shots=d["shots"], seed=d["seed"],
            class_labels=tuple(d["class_labels"]),
            pretrain_records=tuple(SampleRecord.from_dict(r) for r in d["pretrain_records"]),
            train_records=tuple(SampleRecord.from_dict(r) for r in d["train_records"]),
            test_records=tuple(SampleRecord.from_dict(r) for r in d["test_records"]),
        )

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path: str) -> "ProtocolSplit":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _shuffled(records: Sequence[SampleRecord], rng: np.random.Generator) -> List[SampleRecord]:
    order = rng.permutation(len(records))
    return [records[i] for i in order]


def build_fsmad_protocol(manifests: Sequence[DatasetManifest],
                      shots: int,
                      seed: int = 0,
                      predefined_labels: Sequence[str] = PREDEFINED_MORPH_LABELS,
                      novel_labels: Sequence[str] = NOVEL_MORPH_LABELS) -> ProtocolSplit:
    """Build the few-shot detection split.

    All morphs from predefined generators plus the bona fide images of their
    host datasets form the base training pool; ``shots`` samples per novel
    generator plus ``shots`` bona fide images from the novel-hosting
    datasets are added for adaptation (``shots=0`` trains on predefined
    types only).  The remaining novel morphs and novel-side bona fide
    images form the test set.  A dataset hosting both predefined and novel
    generators contributes its bona fide images to the two sides pro rata
    to its morph counts (seeded).
    """
    if shots < 0:
        raise ProtocolError("shots must be >= 0")
    predefined = tuple(predefined_labels)
    novel = tuple(novel_labels)
    if set(predefined) & set(novel):
        raise ProtocolError("predefined and novel label sets overlap")

    records = [r for m in manifests for r in m.records]
    by_label: Dict[str, List[SampleRecord]] = {}
    for r in records:
        by_label.setdefault(r.class_label, []).append(r)

    missing = [l for l in predefined + novel if l not in by_label]
    if missing:
        raise ProtocolError("required morph labels absent from manifests: %s" % missing)

    rng = np.random.default_rng(seed)

    # Partition bona fide images by which side(s) their dataset hosts.
    pre_counts: Dict[str, int] = {}
    nov_counts: Dict[str, int] = {}
    for r in records:
        if r.class_label in predefined:
            pre_counts[r.dataset.value] = pre_counts.get(r.dataset.value, 0) + 1
        elif r.class_label in novel:
            nov_counts[r.dataset.value] = nov_counts.get(r.dataset.value, 0) + 1

    bf_by_dataset: Dict[str, List[SampleRecord]] = {}
    for r in records:
        if r.class_label == BONA_FIDE:
            bf_by_dataset.setdefault(r.dataset.value, []).append(r)

    bf_pre: List[SampleRecord] = []
    bf_nov: List[SampleRecord] = []
    for ds in sorted(bf_by_dataset):
        pool = bf_by_dataset[ds]
        n_pre = pre_counts.get(ds, 0)
        n_nov = nov_counts.get(ds, 0)
        if n_pre and n_nov:
            frac = n_pre / (n_pre + n_nov)
            shuffled = _shuffled(pool, rng)
            cut = int(round(frac * len(shuffled)))
            bf_pre.extend(shuffled[:cut])
            bf_nov.extend(shuffled[cut:])
        elif n_pre:
            bf_pre.extend(pool)
        elif n_nov:
            bf_nov.extend(pool)
        # Datasets hosting neither side contribute nothing.

    if not bf_pre:
        raise ProtocolError("no bona fide images on the predefined side")
    if not bf_nov:
        raise ProtocolError("no bona fide images on the novel side")

    pretrain = [r for r in records if r.class_label in predefined] + bf_pre

    train = list(pretrain)
    test: List[SampleRecord] = []
    for label in novel:
        pool = _shuffled(by_label[label], rng)
        if len(pool) < shots:
            raise ProtocolError("novel label %r has %d samples, fewer than shots=%d"
                                % (label, len(pool), shots))
        train.extend(pool[:shots])
        test.extend(pool[shots:])

    bf_nov_shuffled = _shuffled(bf_nov, rng)
    if len(bf_nov_shuffled) < shots + 1:
        raise ProtocolError("novel-side bona fide pool too small: %d" % len(bf_nov_shuffled))
    train.extend(bf_nov_shuffled[:shots])
    test.extend(bf_nov_shuffled[shots:])

    return ProtocolSplit(
        task="fsmad", shots=shots, seed=seed,
        class_labels=(BONA_FIDE, "morph"),
        pretrain_records=tuple(r.with_split("train") for r in pretrain),
        train_records=tuple(r.with_split("train") for r in train),
        test_records=tuple(r.with_split("test") for r in test),
    )


def build_fsmaf_protocol(manifest: DatasetManifest,
                      shots: int,
                      seed: int = 0,
                      train_fraction: float = 0.8) -> ProtocolSplit:
    """Build the few-shot fingerprinting split.

    Per class: seeded shuffle, ``round(train_fraction * n)`` samples to the
    train partition, the rest to test.  The episodic learner's train set is
    the first ``shots`` of each class's train partition; the test set is
    balanced by downsampling every class to the minimum test class count.
    """
    if shots < 1:
        raise ProtocolError("shots must be >= 1")
    rng = np.random.default_rng(seed)

    pretrain: List[SampleRecord] = []
    train: List[SampleRecord] = []
    test_pools: List[List[SampleRecord]] = []
    for label in manifest.label_set:
        pool = _shuffled(manifest.by_label(label), rng)
        n_train = int(round(train_fraction * len(pool)))
        if n_train < shots:
            raise ProtocolError("class %r has %d train samples, fewer than shots=%d"
                                % (label, n_train, shots))
        if n_train == len(pool):
            raise ProtocolError("class %r has no test samples under an %d:%d split"
                                % (label, round(train_fraction * 100),
                                   round((1 - train_fraction) * 100)))
        pretrain.extend(pool[:n_train])
        train.extend(pool[:shots])
        test_pools.append(pool[n_train:])

    min_count = min(len(p) for p in test_pools)
    test: List[SampleRecord] = []
    for pool in test_pools:
        pick = rng.permutation(len(pool))[:min_count]
        test.extend(pool[i] for i in sorted(pick))

    return ProtocolSplit(
        task="fsmaf", shots=shots, seed=seed,
        class_labels=tuple(manifest.label_set),
        pretrain_records=tuple(r.with_split("train") for r in pretrain),
        train_records=tuple(r.with_split("train") for r in train),
        test_records=tuple(r.with_split("test") for r in test),
    )
