"""Transfer subspace learning over diffusion-graph affinities.

Learns an orthonormal linear projection W that keeps graph-nearby points
close (diffusion smoothness) while shrinking the squared-L2 distance
between Gaussian kernel density estimates of the projected source and
target clouds. At regularization 0 the problem reduces to a plain
spectral embedding, which anchors the optimizer's correctness tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from .diffusion import markov_normalize
from .kernels import gamma_heuristic, knn_sparsify, pairwise_sq_dists, rbf_kernel

__all__ = [
    "Projection",
    "TrDMParams",
    "kde_divergence",
    "kde_divergence_grad",
    "diffusion_affinity",
    "smoothness_quadratic",
    "trdm_objective",
    "trdm_fit",
    "trdm_embed",
    "save_projection",
    "load_projection",
]

_ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class Projection:
    """A d x m linear map with orthonormal columns."""

    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("projection must be a d x m matrix")
        gram = W.T @ W
        if np.abs(gram - np.eye(W.shape[1])).max() > _ORTHONORMAL_TOL:
            raise ValueError("projection columns must be orthonormal")
        W = np.ascontiguousarray(W)
        W.flags.writeable = False
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrDMParams:
    """Transfer-projection hyperparameters.

    lambda_ trades graph smoothness against the source/target divergence;
    k, t and gamma shape the diffusion affinities (None means dense /
    heuristic bandwidth); sigma is the KDE bandwidth (None freezes the
    median pairwise projected distance at initialization); the remaining
    fields control the projected gradient descent.
    """

    lambda_: float = 1.0
    k: int | None = None
    t: int = 1
    gamma: float | None = None
    sigma: float | None = None
    learn_rate: float = 0.1
    max_iters: int = 200
    tol: float = 1e-8
    alpha: float = 1.0
    m: int = 10

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError("lambda_ must be non-negative")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.learn_rate <= 0 or self.max_iters <= 0 or self.tol <= 0:
            raise ValueError("learn_rate, max_iters and tol must be positive")
        if self.m <= 0:
            raise ValueError("m must be positive")


def _gauss_norm(m: int, sigma: float) -> float:
    # Isotropic Gaussian with covariance 2*sigma^2*I (cross-correlation of
    # two sigma-bandwidth kernels).
    return float((4.0 * np.pi * sigma**2) ** (-m / 2.0))


def kde_divergence(Ys, Yt, sigma: float) -> float:
    """Squared-L2 distance between Gaussian KDEs of two point clouds.

    D = mean G(y_i - y_j) - 2 mean G(y_i - z_j) + mean G(z_i - z_j) with
    G the Gaussian density of covariance 2*sigma^2*I. Symmetric in its
    arguments by construction, zero for identical multisets, and
    non-negative up to rounding.
    """
    Ys = np.atleast_2d(np.asarray(Ys, dtype=np.float64))
    Yt = np.atleast_2d(np.asarray(Yt, dtype=np.float64))
    if Ys.shape[1] != Yt.shape[1]:
        raise ValueError("point clouds must share their dimension")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    m = Ys.shape[1]
    norm = _gauss_norm(m, sigma)
    scale = 1.0 / (4.0 * sigma**2)
    g_ss = np.exp(-scale * cdist(Ys, Ys, "sqeuclidean"))
    g_tt = np.exp(-scale * cdist(Yt, Yt, "sqeuclidean"))
    g_st = np.exp(-scale * cdist(Ys, Yt, "sqeuclidean"))
    # Summation order of the cross term is canonicalized so that
    # D(Ys, Yt) == D(Yt, Ys) holds bit-for-bit.
    if g_st.shape[0] == g_st.shape[1]:
        cross = 0.5 * np.sum(g_st + g_st.T)
    elif g_st.shape[0] < g_st.shape[1]:
        cross = np.sum(np.ascontiguousarray(g_st))
    else:
        cross = np.sum(np.ascontiguousarray(g_st.T))
    n_s, n_t = Ys.shape[0], Yt.shape[0]
    return float(
        norm
        * (
            np.sum(g_ss) / n_s**2
            + np.sum(g_tt) / n_t**2
            - 2.0 * cross / (n_s * n_t)
        )
    )


def kde_divergence_grad(Ys, Yt, sigma: float):
    """Analytic gradients of ``kde_divergence`` w.r.t. every coordinate.

    Returns (grad_s, grad_t) with the shapes of Ys and Yt.
    """
    Ys = np.atleast_2d(np.asarray(Ys, dtype=np.float64))
    Yt = np.atleast_2d(np.asarray(Yt, dtype=np.float64))
    if Ys.shape[1] != Yt.shape[1]:
        raise ValueError("point clouds must share their dimension")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    m = Ys.shape[1]
    n_s, n_t = Ys.shape[0], Yt.shape[0]
    norm = _gauss_norm(m, sigma)
    scale = 1.0 / (4.0 * sigma**2)
    g_ss = np.exp(-scale * cdist(Ys, Ys, "sqeuclidean"))
    g_tt = np.exp(-scale * cdist(Yt, Yt, "sqeuclidean"))
    g_st = np.exp(-scale * cdist(Ys, Yt, "sqeuclidean"))

    def pull(G, A, B):
        # sum_j G[a, j] * (A[a] - B[j]) for every row a, vectorized.
        return G.sum(axis=1)[:, None] * A - G @ B

    coeff = norm / (2.0 * sigma**2)
    grad_s = coeff * (-pull(g_ss, Ys, Ys) * (2.0 / n_s**2) + pull(g_st, Ys, Yt) * (2.0 / (n_s * n_t)))
    grad_t = coeff * (-pull(g_tt, Yt, Yt) * (2.0 / n_t**2) + pull(g_st.T, Yt, Ys) * (2.0 / (n_s * n_t)))
    return grad_s, grad_t


def diffusion_affinity(X, params: TrDMParams) -> np.ndarray:
    """Symmetric t-step transition weights of the diffusion chain over X.

    A = sym(diag(pi) @ P^t): the edge weights a t-step random walk assigns
    at stationarity. Entries are non-negative and sum to 1 overall.
    """
    D = pairwise_sq_dists(X)
    gamma = params.gamma if params.gamma is not None else gamma_heuristic(D)
    K = rbf_kernel(D, gamma)
    affinity = knn_sparsify(K, params.k) if params.k is not None else K
    P = markov_normalize(affinity, alpha=params.alpha)
    Pt = np.linalg.matrix_power(P.values, params.t)
    A = P.stationary[:, None] * Pt
    return 0.5 * (A + A.T)


def smoothness_quadratic(X, A) -> np.ndarray:
    """The d x d matrix M with sum_ij A_ij ||W'x_i - W'x_j||^2 = tr(W' M W).

    M = 2 X' L X for the graph Laplacian L of A.
    """
    X = np.asarray(X, dtype=np.float64)
    A = np.asarray(getattr(A, "weights", A), dtype=np.float64)
    deg = A.sum(axis=1)
    M = 2.0 * (X.T @ (X * deg[:, None]) - X.T @ (A @ X))
    return 0.5 * (M + M.T)


def trdm_objective(W, X, A, n_source: int, params: TrDMParams) -> float:
    """Graph smoothness plus lambda times the projected KDE divergence.

    ``W`` may be a Projection or a raw d x m array; ``A`` is a symmetric
    affinity matrix over the rows of X (source rows first).
    """
    Wm = W.W if isinstance(W, Projection) else np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    Y = X @ Wm
    A = np.asarray(getattr(A, "weights", A), dtype=np.float64)
    deg = A.sum(axis=1)
    smooth = 2.0 * (
        float(np.sum(deg * np.einsum("ij,ij->i", Y, Y)))
        - float(np.einsum("ij,ij->", Y, A @ Y))
    )
    if params.lambda_ == 0.0:
        return smooth
    sigma = params.sigma
    if sigma is None:
        raise ValueError("trdm_objective needs an explicit sigma when lambda_ > 0")
    return smooth + params.lambda_ * kde_divergence(Y[:n_source], Y[n_source:], sigma)


def _spectral_solution(M: np.ndarray, m: int) -> np.ndarray:
    w, V = scipy.linalg.eigh(M)
    return V[:, :m]


def _orthonormalize(W: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(W)
    return Q


def trdm_fit(Xs, Xt, params: TrDMParams = TrDMParams(), seed: int = 0, return_history: bool = False):
    """Fit the transfer projection by projected gradient descent.

    Starts from the lambda_=0 spectral solution (the m bottom eigenvectors
    of the smoothness quadratic), takes gradient steps with step-halving
    on any objective increase, and re-orthonormalizes the columns after
    every step, so the objective is non-increasing across accepted
    iterations. Deterministic for fixed inputs and seed.

    Returns the Projection, or (Projection, objective history) when
    ``return_history`` is set.

    Raises RuntimeError (with the iteration index) if the objective turns
    non-finite.
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
    Xt = np.atleast_2d(np.asarray(Xt, dtype=np.float64))
    if Xs.shape[1] != Xt.shape[1]:
        raise ValueError("source and target must share the feature dimension")
    if Xs.shape[0] == 0 or Xt.shape[0] == 0:
        raise ValueError("transfer requires nonempty source and target populations")
    d = Xs.shape[1]
    if params.m > d:
        raise ValueError(f"projection dimension m={params.m} exceeds feature dimension d={d}")
    del seed  # the fit is deterministic; kept for interface stability

    X = np.vstack([Xs, Xt])
    n_source = Xs.shape[0]
    A = diffusion_affinity(X, params)
    M = smoothness_quadratic(X, A)
    W = _spectral_solution(M, params.m)

    sigma = params.sigma
    if params.lambda_ > 0 and sigma is None:
        sigma = float(np.median(pdist(X @ W)))
        if not sigma > 0:
            raise ValueError("median projected distance is zero; provide sigma explicitly")
    frozen = TrDMParams(
        lambda_=params.lambda_,
        k=params.k,
        t=params.t,
        gamma=params.gamma,
        sigma=sigma if params.lambda_ > 0 else params.sigma,
        learn_rate=params.learn_rate,
        max_iters=params.max_iters,
        tol=params.tol,
        alpha=params.alpha,
        m=params.m,
    )

    def objective(Wm):
        return trdm_objective(Wm, X, A, n_source, frozen)

    def gradient(Wm):
        g = 2.0 * (M @ Wm)
        if frozen.lambda_ > 0:
            gs, gt = kde_divergence_grad(Xs @ Wm, Xt @ Wm, sigma)
            g = g + frozen.lambda_ * (Xs.T @ gs + Xt.T @ gt)
        return g

    current = objective(W)
    if not np.isfinite(current):
        raise RuntimeError("non-finite objective at initialization")
    history = [current]
    lr = frozen.learn_rate
    for it in range(frozen.max_iters):
        grad = gradient(W)
        accepted = False
        for _ in range(40):
            candidate = _orthonormalize(W - lr * grad)
            value = objective(candidate)
            if not np.isfinite(value):
                raise RuntimeError(f"non-finite objective at iteration {it}")
            if value <= current:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        W = candidate
        history.append(value)
        if abs(current - value) < frozen.tol:
            current = value
            break
        current = value

    projection = Projection(W)
    if return_history:
        return projection, history
    return projection


def trdm_embed(W: Projection, X) -> np.ndarray:
    """Project rows of X into the learned subspace: Y = X W."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != W.d:
        raise ValueError(f"expected {W.d}-dimensional rows, got {X.shape[1]}")
    return X @ W.W


def save_projection(projection: Projection, path, params: TrDMParams | None = None) -> None:
    """Write the projection as CSV: one header comment with params, d rows, m columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if params is not None:
            fh.write(
                "# trdm"
                f" lambda={params.lambda_} k={params.k} t={params.t}"
                f" gamma={params.gamma} sigma={params.sigma} m={params.m}\n"
            )
        else:
            fh.write("# trdm\n")
        writer = csv.writer(fh)
        for row in projection.W:
            writer.writerow([repr(float(v)) for v in row])


def load_projection(path) -> Projection:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            rows.append([float(v) for v in line.strip().split(",")])
    return Projection(np.asarray(rows, dtype=np.float64))
