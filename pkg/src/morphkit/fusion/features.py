"""Feature containers shared by the fusion strategies."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

STRATEGIES = ("concat", "sum", "max", "cc", "fbc")


@dataclass(frozen=True)
class FeatureGrid:
    """Per-cell feature vectors over a spatial grid.

    ``entries`` has shape (h*w, d): one d-dimensional descriptor per grid
    cell, row-major over the (h, w) layout.
    """

    entries: np.ndarray
    grid_shape: Tuple[int, int]

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2:
            raise ValueError("entries must be (cells, dim), got shape %r" % (e.shape,))
        h, w = self.grid_shape
        if h < 1 or w < 1 or h * w != e.shape[0]:
            raise ValueError("grid shape %r inconsistent with %d cells"
                             % (self.grid_shape, e.shape[0]))
        if not np.all(np.isfinite(e)):
            raise ValueError("feature grid contains non-finite values")
        object.__setattr__(self, "entries", e)

    @property
    def num_cells(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class FusedVector:
    """A single fused descriptor plus the strategy that produced it."""

    values: np.ndarray
    strategy: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("fused vector must be 1-D, got shape %r" % (v.shape,))
        if not np.all(np.isfinite(v)):
            raise ValueError("fused vector contains non-finite values")
        if self.strategy not in STRATEGIES:
            raise ValueError("unknown fusion strategy %r" % self.strategy)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]
