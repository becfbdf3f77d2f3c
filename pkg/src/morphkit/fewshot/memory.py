"""Append-only episodic memory with exact k-nearest-neighbor lookup.

Rows are (embedding, label, write step).  Writes happen only when the
learner is surprised: the predicted probability of the true class falls
strictly below the uniform chance level.  Lookup is brute-force exact by
the configured metric; distance ties break toward the earlier write.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

METRICS = ("euclidean", "cosine")


class MemoryRow(NamedTuple):
    embedding: np.ndarray
    label: int
    write_step: int


def memory_should_write(pred: np.ndarray, true_label: int) -> bool:
    """True when the true-class probability is strictly below chance.

    The rule depends only on pred[true_label] and the class count; a
    prediction at exactly the uniform level does not trigger a write.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    num_classes = pred.size
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if not (0 <= true_label < num_classes):
        raise ValueError("label %d outside [0, %d)" % (true_label, num_classes))
    if abs(float(pred.sum()) - 1.0) > 1e-6:
        raise ValueError("pred must sum to 1 within 1e-6")
    return bool(pred[true_label] < 1.0 / num_classes)


@dataclass
class MemoryStore:
    """Episodic store for one adaptation run."""

    metric: str = "euclidean"
    k: int = 5
    embeddings: List[np.ndarray] = field(default_factory=list)
    labels: List[int] = field(default_factory=list)
    write_steps: List[int] = field(default_factory=list)
    _step: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError("unknown metric %r (expected one of %s)" % (self.metric, METRICS))
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def __len__(self) -> int:
        return len(self.labels)

    def advance_step(self) -> int:
        """Monotonic counter; one tick per processed sample."""
        self._step += 1
        return self._step

    def write(self, embedding: np.ndarray, label: int, step: Optional[int] = None):
        emb = np.asarray(embedding, dtype=np.float64).ravel()
        if self.embeddings and emb.shape != self.embeddings[0].shape:
            raise ValueError("embedding dim %d differs from stored %d"
                             % (emb.size, self.embeddings[0].size))
        if step is None:
            step = self.advance_step()
        self.embeddings.append(emb)
        self.labels.append(int(label))
        self.write_steps.append(int(step))

    def _distances(self, queries: np.ndarray) -> np.ndarray:
        """(B, rows) distance matrix under the configured metric."""
        mem = np.stack(self.embeddings)
        if self.metric == "euclidean":
            diff = queries[:, None, :] - mem[None, :, :]
            return np.sqrt((diff * diff).sum(axis=-1))
        qn = np.linalg.norm(queries, axis=1, keepdims=True)
        mn = np.linalg.norm(mem, axis=1, keepdims=True)
        denom = np.maximum(qn @ mn.T, 1e-12)
        return 1.0 - (queries @ mem.T) / denom

    def neighbors(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Exact kNN for a (B, dim) query batch.

        Returns (indices, distances), both (B, K) with K = min(k, rows).
        Ordered by distance; exact distance ties order by write step.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if not self.embeddings:
            raise ValueError("memory is empty")
        dists = self._distances(queries)
        kk = min(self.k, len(self))
        steps = np.asarray(self.write_steps)
        out_idx = np.empty((queries.shape[0], kk), dtype=np.int64)
        out_d = np.empty((queries.shape[0], kk), dtype=np.float64)
        for i in range(queries.shape[0]):
            order = np.lexsort((steps, dists[i]))[:kk]
            out_idx[i] = order
            out_d[i] = dists[i][order]
        return out_idx, out_d

    def rows(self, indices: np.ndarray):
        emb = np.stack(self.embeddings)[indices]
        lab = np.asarray(self.labels, dtype=np.int64)[indices]
        return emb, lab

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "k": self.k,
            "embeddings": np.stack(self.embeddings) if self.embeddings else
                          np.zeros((0, 0)),
            "labels": np.asarray(self.labels, dtype=np.int64),
            "write_steps": np.asarray(self.write_steps, dtype=np.int64),
            "step": self._step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryStore":
        store = cls(metric=d["metric"], k=int(d["k"]))
        emb = np.asarray(d["embeddings"])
        for i in range(len(d["labels"])):
            store.embeddings.append(emb[i])
            store.labels.append(int(d["labels"][i]))
            store.write_steps.append(int(d["write_steps"][i]))
        store._step = int(d["step"])
        return store


def memory_write(mem: MemoryStore, emb: np.ndarray, label: int) -> MemoryStore:
    """Append one row; existing rows are never touched."""
    mem.write(emb, label)
    return mem


def memory_query(mem: MemoryStore, emb: np.ndarray) -> List[Tuple[MemoryRow, float]]:
    """Exact k nearest rows, ascending distance, ties by write step.

    Returns min(k, len(mem)) pairs; empty list on an empty store.
    """
    if len(mem) == 0:
        return []
    idx, dists = mem.neighbors(np.asarray(emb, dtype=np.float64).reshape(1, -1))
    out = []
    for j, i in enumerate(idx[0]):
        row = MemoryRow(mem.embeddings[i], mem.labels[i], mem.write_steps[i])
        out.append((row, float(dists[0, j])))
    return out
