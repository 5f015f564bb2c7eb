"""Diffusion map embeddings over joint source/target sample sets.

Construction: Gaussian affinities, density normalization with exponent
alpha, row-stochastic Markov chain, then spectral coordinates scaled by
eigenvalue powers at the chosen diffusion time. The embedding is
transductive: it covers exactly the points it was built from.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .kernels import (
    KernelMatrix,
    NeighborhoodGraph,
    gamma_heuristic,
    knn_sparsify,
    pairwise_sq_dists,
    rbf_kernel,
)

__all__ = [
    "MarkovMatrix",
    "DiffusionEmbedding",
    "DiffusionParams",
    "markov_normalize",
    "diffusion_embed",
    "diffusion_distance",
    "embed_joint",
    "embedding_to_csv",
]

_ROW_SUM_TOL = 1e-9
_EIGENVALUE_TOL = 1e-9


@dataclass(frozen=True)
class MarkovMatrix:
    """Row-stochastic transition matrix with its stationary distribution.

    ``alpha`` records the density-normalization exponent the matrix was
    built with; ``stationary`` is the left eigenvector pi with pi @ P = pi.
    """

    values: np.ndarray
    alpha: float
    stationary: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        pi = np.asarray(self.stationary, dtype=np.float64)
        n = v.shape[0]
        if v.ndim != 2 or v.shape != (n, n) or pi.shape != (n,):
            raise ValueError("transition matrix must be square with a matching stationary vector")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if v.min() < 0.0:
            raise ValueError("transition probabilities must be non-negative")
        if np.abs(v.sum(axis=1) - 1.0).max() > _ROW_SUM_TOL:
            raise ValueError("rows must sum to 1")
        if pi.min() <= 0.0 or abs(pi.sum() - 1.0) > _ROW_SUM_TOL:
            raise ValueError("stationary distribution must be positive and sum to 1")
        for name, arr in (("values", v), ("stationary", pi)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DiffusionEmbedding:
    """Spectral coordinates lambda_k^t * psi_k, trivial psi_0 dropped.

    ``eigenvalues`` has length m+1 and starts at the trivial eigenvalue 1;
    ``coords`` is (n, m) with column k-1 scaled by eigenvalues[k]^t.
    """

    eigenvalues: np.ndarray
    coords: np.ndarray
    t: int

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        coords = np.asarray(self.coords, dtype=np.float64)
        if self.t < 0:
            raise ValueError("diffusion time must be non-negative")
        if ev.ndim != 1 or coords.ndim != 2 or ev.size != coords.shape[1] + 1:
            raise ValueError("need m+1 eigenvalues for an (n, m) coordinate matrix")
        if abs(ev[0] - 1.0) > _EIGENVALUE_TOL:
            raise ValueError("leading eigenvalue must equal 1")
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        if ev.min() < -1.0 - _EIGENVALUE_TOL or ev.max() > 1.0 + _EIGENVALUE_TOL:
            raise ValueError("eigenvalues must lie within [-1, 1]")
        if not np.isfinite(coords).all():
            raise ValueError("embedding coordinates must be finite")
        for name, arr in (("eigenvalues", ev), ("coords", coords)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.coords.shape[1]

    @property
    def n(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class DiffusionParams:
    """Knobs for building a diffusion embedding from raw features.

    ``gamma=None`` applies the mean-pairwise-distance heuristic;
    ``k=None`` keeps the affinity matrix dense (the default for the
    sample counts this package targets).
    """

    gamma: float | None = None
    alpha: float = 1.0
    k: int | None = None
    m: int = 10
    t: int = 1


def _affinity_values(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        return K.values
    if isinstance(K, NeighborhoodGraph):
        return K.weights
    return np.asarray(K, dtype=np.float64)


def markov_normalize(K, alpha: float = 1.0) -> MarkovMatrix:
    """Density-normalize affinities and convert to a row-stochastic chain.

    With row sums d, the affinities are rescaled to
    K'_ij = K_ij / (d_i^alpha * d_j^alpha) and then row-normalized. The
    stationary distribution follows in closed form from the row sums of
    the (still symmetric) K'.

    Raises ValueError on an isolated vertex (zero row sum).
    """
    W = _affinity_values(K)
    d = W.sum(axis=1)
    if d.min() <= 0.0:
        raise ValueError("isolated vertex: every row needs positive affinity mass")
    if alpha != 0.0:
        scale = d**alpha
        W = W / np.outer(scale, scale)
        d = W.sum(axis=1)
    P = W / d[:, None]
    pi = d / d.sum()
    return MarkovMatrix(values=P, alpha=alpha, stationary=pi)


def diffusion_embed(P: MarkovMatrix, m: int, t: int) -> DiffusionEmbedding:
    """Top-(m+1) spectral decomposition of the chain, scaled by lambda^t.

    The eigenproblem is solved through the symmetric conjugate
    D^{1/2} P D^{-1/2} with D = diag(pi), so eigenvectors come out
    orthonormal; right-eigenvectors psi_k are normalized to
    sum_i pi_i psi_k(i)^2 = 1 and sign-fixed so the largest-magnitude
    entry of each is positive.
    """
    n = P.n
    if not (0 < m < n):
        raise ValueError(f"embedding dimension must satisfy 0 < m < n (got m={m}, n={n})")
    if t < 0:
        raise ValueError("diffusion time must be non-negative")
    root = np.sqrt(P.stationary)
    S = root[:, None] * P.values / root[None, :]
    S = 0.5 * (S + S.T)
    w, V = scipy.linalg.eigh(S)
    order = np.argsort(w)[::-1][: m + 1]
    eigenvalues = w[order]
    if abs(eigenvalues[0] - 1.0) > _EIGENVALUE_TOL:
        raise ValueError(f"leading eigenvalue {eigenvalues[0]} deviates from 1")
    if eigenvalues.min() < -1.0 - _EIGENVALUE_TOL or eigenvalues.max() > 1.0 + _EIGENVALUE_TOL:
        raise ValueError("eigenvalue outside [-1, 1]; affinity input was not valid")
    eigenvalues = np.clip(eigenvalues, -1.0, 1.0)

    psi = V[:, order] / root[:, None]
    for k in range(psi.shape[1]):
        # Flip so the largest-magnitude entry is positive. Comparing the
        # extremes (rather than argmax) keeps the rule permutation-invariant
        # when several entries share the peak magnitude.
        if -psi[:, k].min() > psi[:, k].max():
            psi[:, k] = -psi[:, k]
    coords = psi[:, 1:] * eigenvalues[1:] ** t
    return DiffusionEmbedding(eigenvalues=eigenvalues, coords=coords, t=t)


def diffusion_distance(P: MarkovMatrix, t: int, i: int, j: int) -> float:
    """Distance between states i and j after t steps of the chain.

    Computed directly from the matrix power:
    D_t(i, j)^2 = sum_u (P^t[i, u] - P^t[j, u])^2 / pi_u. This is the
    independent identity that full-dimension embedding distances must
    reproduce.
    """
    n = P.n
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("state indices out of range")
    Pt = np.linalg.matrix_power(P.values, t)
    diff = Pt[i] - Pt[j]
    return float(np.sqrt(max((diff * diff / P.stationary).sum(), 0.0)))


def embed_joint(source: Dataset, target: Dataset, params: DiffusionParams = DiffusionParams()):
    """Embed the concatenation source||target in one diffusion map.

    Returns (embedding, domains) where ``domains`` marks each embedding
    row 0 for source and 1 for target. Both populations must be nonempty
    and share the feature dimension.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("joint embedding requires nonempty source and target")
    if source.dimension != target.dimension:
        raise ValueError(
            f"dimension mismatch: source d={source.dimension}, target d={target.dimension}"
        )
    X = np.vstack([source.features, target.features])
    D = pairwise_sq_dists(X)
    gamma = params.gamma if params.gamma is not None else gamma_heuristic(D)
    K = rbf_kernel(D, gamma)
    affinity = knn_sparsify(K, params.k) if params.k is not None else K
    P = markov_normalize(affinity, alpha=params.alpha)
    embedding = diffusion_embed(P, m=params.m, t=params.t)
    domains = np.concatenate(
        [np.zeros(len(source), dtype=np.int64), np.ones(len(target), dtype=np.int64)]
    )
    return embedding, domains


def embedding_to_csv(embedding: DiffusionEmbedding, domains, ids, path) -> None:
    """Dump embedding rows as ``id,domain,c0..c{m-1}`` for external plotting."""
    domains = np.asarray(domains)
    if len(ids) != embedding.n or domains.shape != (embedding.n,):
        raise ValueError("ids/domains must match the number of embedded rows")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain"] + [f"c{k}" for k in range(embedding.m)])
        for i in range(embedding.n):
            writer.writerow(
                [ids[i], int(domains[i])] + [repr(float(v)) for v in embedding.coords[i]]
            )
