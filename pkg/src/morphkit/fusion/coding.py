"""Factorized bilinear coding.

Two feature vectors x (dim d1) and y (dim d2) interact through their outer
product x y^T.  Instead of materializing that matrix, it is approximated by
a sparse combination of k rank-r dictionary atoms U_l V_l^T: the code c
minimizes

    ||x y^T - sum_l c_l U_l V_l^T||_F^2 + lambda * ||c||_1.

Everything needed by the solver factorizes through the low-rank atoms:

    correlation  q_l = <U_l V_l^T, x y^T> = sum_rho (U_l^T x)_rho (V_l^T y)_rho
    Gram         G_lm = <U_l V_l^T, U_m V_m^T> = sum((U_l^T U_m) * (V_l^T V_m))

so the outer product never has to exist in memory.  The lasso problem is
solved by ISTA with the exact step 1/L, L = 2 * lambda_max(G).
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .features import FusedVector


def soft_threshold(z: np.ndarray, t: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass(frozen=True)
class FbcDictionary:
    """k rank-r atom pairs plus the sparsity weight.

    ``u`` has shape (k, d1, r) and ``v`` shape (k, d2, r); atom l is
    u[l] @ v[l].T.
    """

    u: np.ndarray
    v: np.ndarray
    lam: float
    n_iter: int = 300

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 3 or v.ndim != 3:
            raise ValueError("u and v must be (k, d, r) arrays")
        if u.shape[0] != v.shape[0] or u.shape[2] != v.shape[2]:
            raise ValueError("u %r and v %r disagree on atom count or rank"
                             % (u.shape, v.shape))
        if u.shape[0] < 1 or u.shape[2] < 1:
            raise ValueError("need at least one atom of rank >= 1")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("dictionary contains non-finite values")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def num_atoms(self) -> int:
        return self.u.shape[0]

    @property
    def rank(self) -> int:
        return self.u.shape[2]

    @property
    def dims(self):
        return self.u.shape[1], self.v.shape[1]

    @classmethod
    def random_init(cls, d1: int, d2: int, num_atoms: int, rank: int = 1,
                    lam: float = 1e-3, seed: int = 0, scale: Optional[float] = None,
                    n_iter: int = 300) -> "FbcDictionary":
        rng = np.random.default_rng(seed)
        if scale is None:
            scale = 1.0 / np.sqrt(max(d1, d2))
        u = rng.standard_normal((num_atoms, d1, rank)) * scale
        v = rng.standard_normal((num_atoms, d2, rank)) * scale
        return cls(u=u, v=v, lam=lam, n_iter=n_iter)

    @cached_property
    def gram(self) -> np.ndarray:
        """G[l, m] = <U_l V_l^T, U_m V_m^T>, computed without outer products."""
        # (k, k, r, r) cross products contracted over the feature dims.
        uu = np.einsum("ldr,mds->lmrs", self.u, self.u)
        vv = np.einsum("ldr,mds->lmrs", self.v, self.v)
        return np.einsum("lmrs,lmrs->lm", uu, vv)

    @cached_property
    def lipschitz(self) -> float:
        """Gradient Lipschitz constant of c -> ||xy^T - sum c_l A_l||^2."""
        return 2.0 * float(np.linalg.eigvalsh(self.gram)[-1])

    def correlations(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """q_l = <A_l, x y^T> for every atom, factorized through u and v."""
        ux = np.einsum("ldr,d->lr", self.u, x)
        vy = np.einsum("ldr,d->lr", self.v, y)
        return np.einsum("lr,lr->l", ux, vy)


@dataclass(frozen=True)
class FbcCode:
    """Sparse code for one feature-vector pair."""

    values: np.ndarray
    index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("code must be 1-D, got shape %r" % (v.shape,))
        if not np.all(np.isfinite(v)):
            raise ValueError("code contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def sparsity(self) -> float:
        """Fraction of exactly-zero entries."""
        return float(np.mean(self.values == 0.0))


def zero_code_threshold(x: np.ndarray, y: np.ndarray, dic: FbcDictionary) -> float:
    """Smallest lambda for which the optimal code is all-zero: 2*max|q|."""
    return 2.0 * float(np.max(np.abs(dic.correlations(x, y)))) if dic.num_atoms else 0.0


def fbc_encode(x: np.ndarray, y: np.ndarray, dic: FbcDictionary,
               n_iter: Optional[int] = None, index: int = 0) -> FbcCode:
    """Solve the sparse coding problem for one pair by ISTA.

    Runs a fixed number of iterations with step 1/L (L from the exact top
    Gram eigenvalue), starting from zero.  ``n_iter`` overrides the
    dictionary default.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d1, d2 = dic.dims
    if x.shape != (d1,):
        raise ValueError("x has shape %r, dictionary expects (%d,)" % (x.shape, d1))
    if y.shape != (d2,):
        raise ValueError("y has shape %r, dictionary expects (%d,)" % (y.shape, d2))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs contain non-finite values")

    iters = dic.n_iter if n_iter is None else n_iter
    q = dic.correlations(x, y)
    g = dic.gram
    lip = dic.lipschitz
    if lip <= 0.0:  # degenerate all-zero dictionary: objective reduces to the l1 term
        return FbcCode(values=np.zeros(dic.num_atoms), index=index)
    tau = 1.0 / lip
    c = np.zeros(dic.num_atoms, dtype=np.float64)
    for _ in range(iters):
        grad = 2.0 * (g @ c - q)
        c = soft_threshold(c - tau * grad, tau * dic.lam)
    return FbcCode(values=c, index=index)


def fbc_objective(c: np.ndarray, x: np.ndarray, y: np.ndarray, dic: FbcDictionary) -> float:
    """Value of the coding objective at c, factorized (no outer products)."""
    q = dic.correlations(x, y)
    const = float((x @ x) * (y @ y))
    quad = float(c @ dic.gram @ c)
    return const - 2.0 * float(q @ c) + quad + dic.lam * float(np.abs(c).sum())


def fbc_pool(codes: Sequence[FbcCode]) -> FusedVector:
    """Element-wise max over a set of codes: one global descriptor."""
    if not codes:
        raise ValueError("cannot pool an empty code list")
    dims = {c.values.shape[0] for c in codes}
    if len(dims) != 1:
        raise ValueError("codes disagree on dimension: %s" % sorted(dims))
    stacked = np.stack([c.values for c in codes])
    return FusedVector(values=stacked.max(axis=0), strategy="fbc")
