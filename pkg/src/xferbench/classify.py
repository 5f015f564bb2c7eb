"""Decision rules: kNN, the 1Known rule, soft-margin SVMs, and MLPs.

The SVM dual is solved by sequential minimal optimization with
maximal-violating-pair selection; the networks are plain numpy with
deterministic seeded shuffling, so identical seeds reproduce training
bit-for-bit. The domain-adversarial network shares the feature layer
with the standard MLP and reverses (and scales) the domain-head gradient
into it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .kernels import gamma_heuristic, pairwise_sq_dists

__all__ = [
    "KnnModel",
    "SvmModel",
    "SvmOvrModel",
    "MlpModel",
    "DaMlpModel",
    "TrainReport",
    "knn_predict",
    "one_known_rule",
    "svm_train",
    "svm_predict",
    "svm_train_ovr",
    "svm_predict_ovr",
    "svm_dual_objective",
    "mlp_train",
    "mlp_predict",
    "mlp_gradients",
    "da_mlp_train",
    "da_domain_predict",
    "domain_gradients",
    "softmax",
    "save_model",
    "load_model",
]

SVM_KKT_TOL = 1e-6


# ---------------------------------------------------------------------------
# Nearest neighbors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnModel:
    """Reference coordinates with labels; queries vote among the k nearest."""

    coords: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        if coords.shape[0] == 0:
            raise ValueError("reference set must be nonempty")
        if labels.shape != (coords.shape[0],):
            raise ValueError("labels must match the reference count")
        if not (0 < self.k <= coords.shape[0]):
            raise ValueError("k must satisfy 0 < k <= reference count")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "labels", labels)


def knn_predict(model: KnnModel, queries) -> np.ndarray:
    """Majority vote among the k nearest references (Euclidean metric).

    Distance ties break toward the smaller reference index, vote ties
    toward the smaller class index.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != model.coords.shape[1]:
        raise ValueError("query dimension does not match the reference coordinates")
    d2 = cdist(queries, model.coords, "sqeuclidean")
    # Stable sort keeps the smaller reference index first on exact ties.
    nearest = np.argsort(d2, axis=1, kind="stable")[:, : model.k]
    votes = model.labels[nearest]
    n_classes = int(model.labels.max()) + 1
    counts = np.zeros((queries.shape[0], n_classes), dtype=np.int64)
    rows = np.repeat(np.arange(queries.shape[0]), model.k)
    np.add.at(counts, (rows, votes.reshape(-1)), 1)
    return counts.argmax(axis=1)


def one_known_rule(coords, target_indices, true_labels, seed: int, n_classes: int | None = None) -> KnnModel:
    """Label one random target exemplar per class; classify by 1-NN to those.

    ``coords`` are embedding coordinates over all rows, ``target_indices``
    the rows belonging to the target population, and ``true_labels`` the
    label oracle indexed like ``coords``. Raises ValueError when a class
    has no target sample to reveal.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    target_indices = np.asarray(target_indices, dtype=np.int64)
    true_labels = np.asarray(true_labels, dtype=np.int64)
    target_labels = true_labels[target_indices]
    if n_classes is None:
        n_classes = int(target_labels.max()) + 1
    rng = np.random.default_rng(seed)
    exemplars = []
    for c in range(n_classes):
        members = target_indices[target_labels == c]
        if members.size == 0:
            raise ValueError(f"class {c} has no target samples to label")
        exemplars.append(int(rng.choice(members)))
    return KnnModel(coords=coords[exemplars], labels=np.arange(n_classes), k=1)


# ---------------------------------------------------------------------------
# Support vector machines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvmModel:
    """Binary soft-margin SVM in dual form.

    ``dual_coefs`` holds alpha_i * y_i for the support vectors; linear
    models additionally carry the equivalent explicit weight vector.
    """

    kind: str
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    C: float
    gamma: float | None = None
    weights: np.ndarray | None = None
    dual_objective: float = 0.0
    n_iter: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError("kind must be 'linear' or 'rbf'")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.kind == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("rbf models need a positive gamma")
        coefs = np.asarray(self.dual_coefs, dtype=np.float64)
        if np.abs(coefs).max(initial=0.0) > self.C * (1 + 1e-9):
            raise ValueError("|dual coefficients| cannot exceed C")
        object.__setattr__(self, "support_vectors", np.atleast_2d(np.asarray(self.support_vectors, dtype=np.float64)))
        object.__setattr__(self, "dual_coefs", coefs)


def _kernel_cross(kind: str, gamma, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    d2 = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def svm_dual_objective(alpha: np.ndarray, Q: np.ndarray) -> float:
    """Soft-margin dual value sum(alpha) - alpha' Q alpha / 2."""
    return float(alpha.sum() - 0.5 * alpha @ (Q @ alpha))


def svm_train(X, y, kind: str = "linear", C: float = 1.0, gamma: float | None = None,
              tol: float = SVM_KKT_TOL, max_iter: int = 200_000) -> SvmModel:
    """Solve the soft-margin dual by SMO with maximal-violating-pair selection.

    Labels must be +/-1 with both classes present. The optimizer stops
    when the maximal KKT violation drops below ``tol``; for the rbf kind
    a missing gamma falls back to the mean-pairwise-distance heuristic.

    Raises RuntimeError (including the duality gap) if the iteration cap
    is hit first.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if y.shape != (n,) or not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be a +/-1 vector matching the rows of X")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    if C <= 0:
        raise ValueError("C must be positive")
    if kind == "rbf" and gamma is None:
        gamma = gamma_heuristic(pairwise_sq_dists(X))

    K = _kernel_cross(kind, gamma, X, X)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective to *minimize*

    def violation_pair():
        neg_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        i = int(np.flatnonzero(up)[np.argmax(neg_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(neg_yg[low])])
        return i, j, neg_yg[i] - neg_yg[j], neg_yg

    it = 0
    while True:
        i, j, gap, neg_yg = violation_pair()
        if gap <= tol:
            break
        if it >= max_iter:
            b_est = float((neg_yg[i] + neg_yg[j]) / 2.0)
            margins = (alpha * y) @ K + b_est
            primal = 0.5 * alpha @ (Q @ alpha) + C * np.maximum(0.0, 1.0 - y * margins).sum()
            dual = svm_dual_objective(alpha, Q)
            raise RuntimeError(
                f"SMO did not converge in {max_iter} iterations; duality gap {primal - dual:.3e}"
            )
        # Two-variable update along the feasible direction
        # (alpha_i += y_i t, alpha_j -= y_j t). The step is capped by each
        # variable's own box headroom, and a capped variable is snapped
        # exactly onto its bound so no pair can stall one ulp short of it.
        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        t_star = gap / quad
        t_i = (C - alpha[i]) if y[i] > 0 else alpha[i]
        t_j = alpha[j] if y[j] > 0 else (C - alpha[j])
        t = min(t_star, t_i, t_j)
        old_i, old_j = alpha[i], alpha[j]
        new_i = old_i + y[i] * t
        new_j = old_j - y[j] * t
        if t == t_i:
            new_i = C if y[i] > 0 else 0.0
        if t == t_j:
            new_j = 0.0 if y[j] > 0 else C
        alpha[i], alpha[j] = min(max(new_i, 0.0), C), min(max(new_j, 0.0), C)
        grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
        it += 1

    # Bias: average over margin support vectors, else the midpoint of the
    # feasible interval left by the final gradient.
    neg_yg = -y * grad
    on_margin = (alpha > 1e-10 * C) & (alpha < C * (1.0 - 1e-10))
    if np.any(on_margin):
        bias = float(neg_yg[on_margin].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        bias = float((neg_yg[up].max() + neg_yg[low].min()) / 2.0)

    sv = alpha > 1e-12 * C
    weights = X.T @ (alpha * y) if kind == "linear" else None
    return SvmModel(
        kind=kind,
        support_vectors=X[sv],
        dual_coefs=(alpha * y)[sv],
        bias=bias,
        C=C,
        gamma=gamma if kind == "rbf" else None,
        weights=weights,
        dual_objective=svm_dual_objective(alpha, Q),
        n_iter=it,
    )


def svm_predict(model: SvmModel, queries):
    """Signed labels and real margins for each query row.

    Linear models use the explicit weight vector; kernel models expand
    over the stored support vectors.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != model.support_vectors.shape[1]:
        raise ValueError("query dimension does not match the training data")
    if model.kind == "linear" and model.weights is not None:
        margins = queries @ model.weights + model.bias
    else:
        k = _kernel_cross(model.kind, model.gamma, queries, model.support_vectors)
        margins = k @ model.dual_coefs + model.bias
    return np.where(margins >= 0, 1, -1).astype(np.int64), margins


@dataclass(frozen=True)
class SvmOvrModel:
    """One-vs-rest multiclass wrapper; prediction is the margin argmax."""

    models: tuple[SvmModel, ...]

    @property
    def n_classes(self) -> int:
        return len(self.models)


def svm_train_ovr(X, labels, kind: str = "linear", C: float = 1.0, gamma: float | None = None,
                  tol: float = SVM_KKT_TOL) -> SvmOvrModel:
    """Train one binary SVM per class against the rest."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if kind == "rbf" and gamma is None:
        gamma = gamma_heuristic(pairwise_sq_dists(np.asarray(X, dtype=np.float64)))
    models = tuple(
        svm_train(X, np.where(labels == c, 1.0, -1.0), kind=kind, C=C, gamma=gamma, tol=tol)
        for c in range(n_classes)
    )
    return SvmOvrModel(models=models)


def svm_predict_ovr(model: SvmOvrModel, queries) -> np.ndarray:
    margins = np.column_stack([svm_predict(m, queries)[1] for m in model.models])
    return margins.argmax(axis=1)


# ---------------------------------------------------------------------------
# Fully connected networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MlpModel:
    """linear -> ReLU -> linear classifier."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for arr in (self.W1, self.b1, self.W2, self.b2):
            if not np.isfinite(np.asarray(arr)).all():
                raise ValueError("network weights must be finite")
        if self.W1.shape[1] < 1 or self.W2.shape[1] < 2:
            raise ValueError("need hidden width >= 1 and >= 2 classes")


@dataclass(frozen=True)
class DaMlpModel:
    """MLP plus a two-way domain head fed through gradient reversal."""

    base: MlpModel
    Wd: np.ndarray
    bd: np.ndarray
    lambda_d: float

    def __post_init__(self):
        if self.lambda_d < 0:
            raise ValueError("lambda_d must be non-negative")
        if self.Wd.shape != (self.base.W1.shape[1], 2):
            raise ValueError("domain head must map the hidden layer to 2 logits")


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch mean training loss and validation accuracy."""

    train_loss: np.ndarray
    val_accuracy: np.ndarray

    def __post_init__(self):
        if len(self.train_loss) != len(self.val_accuracy):
            raise ValueError("loss and accuracy traces must cover the same epochs")


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_feature_params(seed: int, d: int, hidden: int, n_classes: int):
    """Seeded initial parameters shared by the plain and adversarial trainers.

    Draw order (W1 then W2 from one stream) is part of the trainers'
    determinism contract; the returned generator continues that stream
    for the per-epoch shuffles.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    W1 = _glorot(rng, d, hidden)
    b1 = np.zeros(hidden)
    W2 = _glorot(rng, hidden, n_classes)
    b2 = np.zeros(n_classes)
    return rng, W1, b1, W2, b2


def _forward(W1, b1, W2, b2, X):
    Z1 = X @ W1 + b1
    H = np.maximum(Z1, 0.0)
    return Z1, H, H @ W2 + b2


def _ce_loss_and_dscores(scores: np.ndarray, y: np.ndarray):
    probs = softmax(scores)
    n = scores.shape[0]
    loss = float(-np.log(probs[np.arange(n), y] + 1e-300).mean())
    dscores = probs
    dscores[np.arange(n), y] -= 1.0
    return loss, dscores / n


def mlp_gradients(model: MlpModel, X, y):
    """Cross-entropy loss and gradients of every parameter at one point."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    Z1, H, scores = _forward(model.W1, model.b1, model.W2, model.b2, X)
    loss, dscores = _ce_loss_and_dscores(scores, y)
    dW2 = H.T @ dscores
    db2 = dscores.sum(axis=0)
    dH = dscores @ model.W2.T
    dZ1 = dH * (Z1 > 0)
    dW1 = X.T @ dZ1
    db1 = dZ1.sum(axis=0)
    return loss, {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def domain_gradients(model: DaMlpModel, X, domains):
    """Domain cross-entropy and its gradients (feature layer and head)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    domains = np.asarray(domains, dtype=np.int64)
    base = model.base
    Z1 = X @ base.W1 + base.b1
    H = np.maximum(Z1, 0.0)
    scores = H @ model.Wd + model.bd
    loss, dscores = _ce_loss_and_dscores(scores, domains)
    dWd = H.T @ dscores
    dbd = dscores.sum(axis=0)
    dH = dscores @ model.Wd.T
    dZ1 = dH * (Z1 > 0)
    dW1 = X.T @ dZ1
    db1 = dZ1.sum(axis=0)
    return loss, {"W1": dW1, "b1": db1, "Wd": dWd, "bd": dbd}


def mlp_predict(model: MlpModel, queries):
    """Argmax class indices (ties to the smaller index) and raw scores."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    _, _, scores = _forward(model.W1, model.b1, model.W2, model.b2, queries)
    return scores.argmax(axis=1), scores


def _accuracy_of(model: MlpModel, X, y) -> float:
    pred, _ = mlp_predict(model, X)
    return float((pred == np.asarray(y)).mean())


def _batches(perm: np.ndarray, batch_size: int):
    for start in range(0, perm.size, batch_size):
        yield perm[start : start + batch_size]


def mlp_train(X, y, *, hidden: int = 64, epochs: int, learn_rate: float = 1e-2,
              batch_size: int = 32, seed: int = 0, n_classes: int | None = None,
              X_val=None, y_val=None) -> tuple[MlpModel, TrainReport]:
    """Mini-batch gradient descent on softmax cross-entropy.

    Weights start Glorot-uniform (+-sqrt(6/(fan_in+fan_out))), biases at
    zero; the per-epoch shuffle order is fixed by the seed, making runs
    bit-reproducible. Validation accuracy falls back to training accuracy
    when no validation split is supplied.

    Raises RuntimeError (with epoch/batch indices) if the loss turns
    non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if X.shape[0] == 0:
        raise ValueError("training data must be nonempty")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    rng, W1, b1, W2, b2 = _init_feature_params(seed, X.shape[1], hidden, n_classes)

    losses, accs = [], []
    for epoch in range(epochs):
        perm = rng.permutation(X.shape[0])
        epoch_loss = 0.0
        for batch_no, batch in enumerate(_batches(perm, batch_size)):
            model = MlpModel(W1=W1, b1=b1, W2=W2, b2=b2)
            loss, grads = mlp_gradients(model, X[batch], y[batch])
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            W1 = W1 - learn_rate * grads["W1"]
            b1 = b1 - learn_rate * grads["b1"]
            W2 = W2 - learn_rate * grads["W2"]
            b2 = b2 - learn_rate * grads["b2"]
            epoch_loss += loss * batch.size
        losses.append(epoch_loss / X.shape[0])
        model = MlpModel(W1=W1, b1=b1, W2=W2, b2=b2)
        if X_val is not None and len(X_val) > 0:
            accs.append(_accuracy_of(model, X_val, y_val))
        else:
            accs.append(_accuracy_of(model, X, y))
    return model, TrainReport(train_loss=np.asarray(losses), val_accuracy=np.asarray(accs))


def da_mlp_train(X, y, domains, *, lambda_d: float = 1.0, hidden: int = 64, epochs: int,
                 learn_rate: float = 1e-2, batch_size: int = 32, seed: int = 0,
                 n_classes: int | None = None, X_val=None, y_val=None) -> tuple[DaMlpModel, TrainReport]:
    """Domain-adversarial training: class head on source, domain head on all.

    The feature layer receives the class gradient plus ``-lambda_d`` times
    the domain gradient (gradient reversal); both heads receive their own
    unreversed gradients. With ``lambda_d=0`` the feature/class trajectory
    is bit-identical to ``mlp_train`` on the source rows under the same
    seed: the source shuffle consumes the same RNG stream, and the domain
    machinery uses a separate one.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if domains is None:
        raise ValueError("domain tags are required for adversarial training")
    domains = np.asarray(domains, dtype=np.int64)
    if domains.shape != (X.shape[0],):
        raise ValueError("every row needs a domain tag")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    source = np.flatnonzero(domains == 0)
    target = np.flatnonzero(domains == 1)
    if source.size == 0 or target.size == 0:
        raise ValueError("adversarial training needs both source and target rows")
    if np.any(y[source] < 0):
        raise ValueError("source rows must be labeled")
    if n_classes is None:
        n_classes = int(y[source].max()) + 1

    rng, W1, b1, W2, b2 = _init_feature_params(seed, X.shape[1], hidden, n_classes)
    rng_domain = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    Wd = _glorot(rng_domain, hidden, 2)
    bd = np.zeros(2)

    Xs, ys = X[source], y[source]
    losses, accs = [], []
    for epoch in range(epochs):
        perm_s = rng.permutation(Xs.shape[0])
        source_batches = list(_batches(perm_s, batch_size))
        perm_t = target[rng_domain.permutation(target.size)]
        target_chunks = np.array_split(perm_t, len(source_batches))
        epoch_loss = 0.0
        seen = 0
        for batch_no, (sb, tc) in enumerate(zip(source_batches, target_chunks)):
            model = DaMlpModel(base=MlpModel(W1=W1, b1=b1, W2=W2, b2=b2), Wd=Wd, bd=bd, lambda_d=lambda_d)
            class_loss, g_class = mlp_gradients(model.base, Xs[sb], ys[sb])
            rows = np.concatenate([source[sb], tc])
            dom_loss, g_dom = domain_gradients(model, X[rows], domains[rows])
            if not (np.isfinite(class_loss) and np.isfinite(dom_loss)):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            if lambda_d == 0.0:
                gW1, gb1 = g_class["W1"], g_class["b1"]
            else:
                gW1 = g_class["W1"] - lambda_d * g_dom["W1"]
                gb1 = g_class["b1"] - lambda_d * g_dom["b1"]
            W1 = W1 - learn_rate * gW1
            b1 = b1 - learn_rate * gb1
            W2 = W2 - learn_rate * g_class["W2"]
            b2 = b2 - learn_rate * g_class["b2"]
            Wd = Wd - learn_rate * g_dom["Wd"]
            bd = bd - learn_rate * g_dom["bd"]
            epoch_loss += (class_loss + dom_loss) * sb.size
            seen += sb.size
        losses.append(epoch_loss / seen)
        base = MlpModel(W1=W1, b1=b1, W2=W2, b2=b2)
        if X_val is not None and len(X_val) > 0:
            accs.append(_accuracy_of(base, X_val, y_val))
        else:
            accs.append(_accuracy_of(base, Xs, ys))
    model = DaMlpModel(base=base, Wd=Wd, bd=bd, lambda_d=lambda_d)
    return model, TrainReport(train_loss=np.asarray(losses), val_accuracy=np.asarray(accs))


def da_domain_predict(model: DaMlpModel, queries) -> np.ndarray:
    """Domain-head decision (0 = source, 1 = target) for each query."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    base = model.base
    H = np.maximum(queries @ base.W1 + base.b1, 0.0)
    return (H @ model.Wd + model.bd).argmax(axis=1)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"XFBMODL1"
_KIND_TAGS = {"knn": 1, "svm": 2, "svm_ovr": 3, "mlp": 4, "da_mlp": 5}


def _write_arrays(fh, ints, floats, arrays):
    fh.write(struct.pack("<q", len(ints)))
    fh.write(np.asarray(ints, dtype="<i8").tobytes())
    fh.write(struct.pack("<q", len(floats)))
    fh.write(np.asarray(floats, dtype="<f8").tobytes())
    fh.write(struct.pack("<q", len(arrays)))
    for arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        fh.write(struct.pack("<q", a.ndim))
        fh.write(np.asarray(a.shape, dtype="<i8").tobytes())
        fh.write(a.tobytes())


def _read_arrays(fh):
    (n_ints,) = struct.unpack("<q", fh.read(8))
    ints = np.frombuffer(fh.read(8 * n_ints), dtype="<i8").tolist()
    (n_floats,) = struct.unpack("<q", fh.read(8))
    floats = np.frombuffer(fh.read(8 * n_floats), dtype="<f8").tolist()
    (n_arrays,) = struct.unpack("<q", fh.read(8))
    arrays = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack("<q", fh.read(8))
        shape = tuple(np.frombuffer(fh.read(8 * ndim), dtype="<i8").tolist())
        count = int(np.prod(shape)) if shape else 1
        arrays.append(np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy())
    return ints, floats, arrays


def _dump_model(fh, model) -> None:
    if isinstance(model, KnnModel):
        fh.write(struct.pack("<i", _KIND_TAGS["knn"]))
        _write_arrays(fh, [model.k], [], [model.coords, model.labels.astype(np.float64)])
    elif isinstance(model, SvmModel):
        fh.write(struct.pack("<i", _KIND_TAGS["svm"]))
        kind_flag = 0 if model.kind == "linear" else 1
        has_w = 0 if model.weights is None else 1
        arrays = [model.support_vectors, model.dual_coefs]
        if has_w:
            arrays.append(model.weights)
        _write_arrays(
            fh,
            [kind_flag, has_w, model.n_iter],
            [model.bias, model.C, model.gamma if model.gamma is not None else np.nan, model.dual_objective],
            arrays,
        )
    elif isinstance(model, SvmOvrModel):
        fh.write(struct.pack("<i", _KIND_TAGS["svm_ovr"]))
        fh.write(struct.pack("<q", len(model.models)))
        for sub in model.models:
            _dump_model(fh, sub)
    elif isinstance(model, MlpModel):
        fh.write(struct.pack("<i", _KIND_TAGS["mlp"]))
        _write_arrays(fh, [], [], [model.W1, model.b1, model.W2, model.b2])
    elif isinstance(model, DaMlpModel):
        fh.write(struct.pack("<i", _KIND_TAGS["da_mlp"]))
        _write_arrays(
            fh,
            [],
            [model.lambda_d],
            [model.base.W1, model.base.b1, model.base.W2, model.base.b2, model.Wd, model.bd],
        )
    else:
        raise TypeError(f"cannot checkpoint models of type {type(model).__name__}")


def _load_model_body(fh):
    (tag,) = struct.unpack("<i", fh.read(4))
    if tag == _KIND_TAGS["knn"]:
        ints, _, arrays = _read_arrays(fh)
        return KnnModel(coords=arrays[0], labels=arrays[1].astype(np.int64), k=ints[0])
    if tag == _KIND_TAGS["svm"]:
        ints, floats, arrays = _read_arrays(fh)
        kind = "linear" if ints[0] == 0 else "rbf"
        gamma = None if np.isnan(floats[2]) else floats[2]
        return SvmModel(
            kind=kind,
            support_vectors=arrays[0],
            dual_coefs=arrays[1],
            bias=floats[0],
            C=floats[1],
            gamma=gamma,
            weights=arrays[2] if ints[1] else None,
            dual_objective=floats[3],
            n_iter=ints[2],
        )
    if tag == _KIND_TAGS["svm_ovr"]:
        (count,) = struct.unpack("<q", fh.read(8))
        return SvmOvrModel(models=tuple(_load_model_body(fh) for _ in range(count)))
    if tag == _KIND_TAGS["mlp"]:
        _, _, arrays = _read_arrays(fh)
        return MlpModel(W1=arrays[0], b1=arrays[1], W2=arrays[2], b2=arrays[3])
    if tag == _KIND_TAGS["da_mlp"]:
        _, floats, arrays = _read_arrays(fh)
        base = MlpModel(W1=arrays[0], b1=arrays[1], W2=arrays[2], b2=arrays[3])
        return DaMlpModel(base=base, Wd=arrays[4], bd=arrays[5], lambda_d=floats[0])
    raise ValueError(f"unknown model kind tag {tag}")


def save_model(model, path) -> None:
    """Write a flat binary checkpoint: magic, kind tag, shapes, float64 payload."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        _dump_model(fh, model)


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        return _load_model_body(fh)
