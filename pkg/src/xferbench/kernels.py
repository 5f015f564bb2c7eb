"""Pairwise distances, RBF affinities, the bandwidth heuristic, kNN graphs.

These feed both the SVM kernels and the diffusion machinery. Matrices are
dense (the working regime is a few thousand samples) and can be cached to
a flat binary layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DistanceMatrix",
    "KernelMatrix",
    "NeighborhoodGraph",
    "pairwise_sq_dists",
    "gamma_heuristic",
    "rbf_kernel",
    "knn_sparsify",
    "save_square_matrix",
    "load_square_matrix",
]


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric matrix of squared Euclidean distances with a zero diagonal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diagonal(v) != 0.0) or v.min() < 0.0:
            raise ValueError("distances must be non-negative with a zero diagonal")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class KernelMatrix:
    """Dense RBF affinity matrix, entries in (0, 1], unit diagonal."""

    values: np.ndarray
    gamma: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("kernel matrix must be square")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not np.array_equal(v, v.T):
            raise ValueError("kernel matrix must be symmetric")
        if v.min() <= 0.0 or v.max() > 1.0 or np.any(np.diagonal(v) != 1.0):
            raise ValueError("kernel entries must lie in (0, 1] with a unit diagonal")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Symmetrized k-nearest-neighbor affinity graph (zeros mean no edge)."""

    weights: np.ndarray
    k: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("graph weights must be square")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if not np.array_equal(w, w.T):
            raise ValueError("graph weights must be symmetric")
        if w.min() < 0.0:
            raise ValueError("graph weights must be non-negative")
        if np.count_nonzero(w, axis=1).min() < self.k:
            raise ValueError("each row must keep at least k neighbors")
        w = np.ascontiguousarray(w)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def pairwise_sq_dists(X) -> DistanceMatrix:
    """All-pairs squared Euclidean distances of the rows of X.

    Uses the Gram expansion ||a||^2 + ||b||^2 - 2<a, b> clamped at zero,
    with the result symmetrized and the diagonal forced to exact zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    sq = np.einsum("ij,ij->i", X, X)
    d = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d, 0.0, out=d)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d)


def gamma_heuristic(D: DistanceMatrix, mean_of_squares: bool = False) -> float:
    """Kernel bandwidth as the inverse of the squared mean pairwise distance.

    The default reads "squared mean": gamma = 1 / (mean_{i<j} d_ij)^2.
    ``mean_of_squares`` switches to the alternate reading
    gamma = 1 / mean_{i<j}(d_ij^2).

    Raises ValueError when all pairwise distances are zero.
    """
    if D.n < 2:
        raise ValueError("need at least two samples for the bandwidth heuristic")
    iu = np.triu_indices(D.n, k=1)
    sq = D.values[iu]
    if mean_of_squares:
        denom = sq.mean()
    else:
        denom = np.sqrt(sq).mean() ** 2
    if denom == 0.0:
        raise ValueError("all pairwise distances are zero; bandwidth undefined")
    return 1.0 / denom


def rbf_kernel(D: DistanceMatrix, gamma: float) -> KernelMatrix:
    """Gaussian affinities exp(-gamma * d^2) from squared distances."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    # Elementwise exp of an exactly-symmetric matrix stays exactly symmetric.
    values = np.exp(-gamma * D.values)
    np.fill_diagonal(values, 1.0)
    return KernelMatrix(values=values, gamma=gamma)


def knn_sparsify(K: KernelMatrix, k: int) -> NeighborhoodGraph:
    """Keep each row's k largest off-diagonal affinities, then max-symmetrize.

    Ties are broken toward the smaller column index so the graph is a
    deterministic function of its input.
    """
    n = K.n
    if not (0 < k < n):
        raise ValueError(f"k must satisfy 0 < k < n (got k={k}, n={n})")
    values = K.values
    kept = np.zeros_like(values)
    cols = np.arange(n)
    for i in range(n):
        row = values[i].copy()
        row[i] = -np.inf
        # lexsort: primary key -row (descending affinity), then column index.
        order = np.lexsort((cols, -row))
        keep = order[:k]
        kept[i, keep] = values[i, keep]
    return NeighborhoodGraph(weights=np.maximum(kept, kept.T), k=k)


def save_square_matrix(values: np.ndarray, path) -> None:
    """Cache a square matrix: int64 n, then row-major little-endian float64."""
    v = np.ascontiguousarray(values, dtype="<f8")
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("only square matrices are cacheable")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", v.shape[0]))
        fh.write(v.tobytes())


def load_square_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<q", fh.read(8))
        data = np.frombuffer(fh.read(n * n * 8), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"{path}: truncated matrix payload")
    return data.reshape(n, n).astype(np.float64)
