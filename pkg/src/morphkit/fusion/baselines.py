"""Reference fusion strategies and the linear probe.

These are the non-bilinear ways of combining two feature vectors that the
coding approach is measured against: concatenation, element-wise sum and
max, and a convex combination with a validated weight.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from sklearn.svm import LinearSVC

from .features import FusedVector


def baseline_fuse(a: np.ndarray, b: np.ndarray, strategy: str,
                  cc_weight: float = 0.5) -> FusedVector:
    """Fuse two vectors by one of the reference strategies.

    ``concat`` works for any dims; ``sum``, ``max`` and ``cc`` require equal
    dims.  ``cc`` computes cc_weight * a + (1 - cc_weight) * b.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if strategy == "concat":
        return FusedVector(values=np.concatenate([a, b]), strategy="concat")
    if a.shape != b.shape:
        raise ValueError("strategy %r needs equal dims, got %d and %d"
                         % (strategy, a.size, b.size))
    if strategy == "sum":
        return FusedVector(values=a + b, strategy="sum")
    if strategy == "max":
        return FusedVector(values=np.maximum(a, b), strategy="max")
    if strategy == "cc":
        if not (0.0 <= cc_weight <= 1.0):
            raise ValueError("cc_weight must lie in [0, 1], got %r" % cc_weight)
        return FusedVector(values=cc_weight * a + (1.0 - cc_weight) * b, strategy="cc")
    raise ValueError("unknown fusion strategy %r" % strategy)


def fuse_arrays(feats_a: np.ndarray, feats_b: np.ndarray, strategy: str,
                cc_weight: float = 0.5) -> np.ndarray:
    """Vectorized baseline_fuse over row-aligned feature matrices."""
    out = [baseline_fuse(a, b, strategy, cc_weight).values
           for a, b in zip(feats_a, feats_b)]
    return np.stack(out)


def fit_linear_probe(train_x: np.ndarray, train_y: np.ndarray,
                     test_x: np.ndarray, seed: int = 0,
                     c: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Linear SVM probe on feature matrices: (predicted labels, scores).

    For binary problems the score column is the signed distance to the
    hyperplane (positive favors the larger label); multiclass returns the
    per-class margin matrix.
    """
    train_y = np.asarray(train_y)
    if len(np.unique(train_y)) < 2:
        raise ValueError("training labels contain a single class")
    clf = LinearSVC(C=c, random_state=seed, max_iter=20000)
    clf.fit(train_x, train_y)
    scores = clf.decision_function(test_x)
    return clf.predict(test_x), scores


def _vec(v) -> np.ndarray:
    return np.asarray(getattr(v, "values", v), dtype=np.float64).ravel()


def linear_classifier(train, test, seed: int = 0,
                      c: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Margin-based linear classifier over fused vectors.

    ``train`` is a sequence of (vector, label) pairs, ``test`` a sequence of
    vectors; both accept FusedVector or raw arrays.  Returns predicted
    labels and decision scores.
    """
    train_x = np.stack([_vec(v) for v, _ in train])
    train_y = np.asarray([y for _, y in train])
    test_x = np.stack([_vec(v) for v in test])
    return fit_linear_probe(train_x, train_y, test_x, seed=seed, c=c)


def select_cc_weight(feats_a: np.ndarray, feats_b: np.ndarray,
                     labels: np.ndarray, seed: int = 0,
                     grid: Optional[Sequence[float]] = None) -> float:
    """Pick the convex-combination weight on a held-out tenth of the data.

    Deterministic: seeded holdout, fixed grid order, first best wins.
    """
    if grid is None:
        grid = np.round(np.linspace(0.0, 1.0, 11), 2)
    labels = np.asarray(labels)
    n = len(labels)
    if n < 10 or len(np.unique(labels)) < 2:
        return 0.5
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(1, n // 10)
    val_idx, fit_idx = order[:n_val], order[n_val:]
    if len(np.unique(labels[fit_idx])) < 2 or len(val_idx) == 0:
        return 0.5

    best_w, best_acc = 0.5, -1.0
    for w in grid:
        fused = fuse_arrays(feats_a, feats_b, "cc", cc_weight=float(w))
        try:
            pred, _ = fit_linear_probe(fused[fit_idx], labels[fit_idx],
                                       fused[val_idx], seed=seed)
        except ValueError:
            continue
        acc = float(np.mean(pred == labels[val_idx]))
        if acc > best_acc:
            best_acc, best_w = acc, float(w)
    return best_w
