"""Acceptance criteria, one test per criterion, with stated tolerances.

Each test prints a single ``ACCEPTANCE <n> PASS/FAIL`` line (run pytest
with ``-s`` to see them live) and enforces its runtime budget where one
is stated.
"""

import time
from contextlib import contextmanager

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist

from xferbench import classify as cl
from xferbench import diffusion as df
from xferbench import harness as hz
from xferbench import imageprep as ip
from xferbench import kernels as kr
from xferbench import transfer as tf
from xferbench.dataset import Dataset, SplitSpec, align_feature_spaces, balance_classes, split


@contextmanager
def criterion(number, description):
    started = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {number} FAIL ({description})")
        raise
    elapsed = time.perf_counter() - started
    print(f"ACCEPTANCE {number} PASS ({description}) [{elapsed:.2f}s]")


def random_chain(rng):
    n = int(rng.integers(5, 31))
    X = rng.normal(size=(n, 3))
    K = kr.rbf_kernel(kr.pairwise_sq_dists(X), gamma=float(rng.uniform(0.2, 1.5)))
    return df.markov_normalize(K, alpha=float(rng.choice([0.0, 0.5, 1.0])))


def test_criterion_1_diffusion_suite():
    with criterion(1, "diffusion suite: stochasticity, spectrum, distance identity"):
        started = time.perf_counter()
        rng = np.random.default_rng(101)
        for _ in range(20):
            P = random_chain(rng)
            n = P.n
            assert np.abs(P.values.sum(axis=1) - 1.0).max() <= 1e-9
            emb = df.diffusion_embed(P, m=n - 1, t=1)
            assert emb.eigenvalues.min() >= -1.0 - 1e-9
            assert emb.eigenvalues.max() <= 1.0 + 1e-9
            for i in range(n):
                for j in range(i + 1, n):
                    direct = df.diffusion_distance(P, 1, i, j)
                    embedded = float(np.linalg.norm(emb.coords[i] - emb.coords[j]))
                    assert abs(direct - embedded) <= 1e-8
        assert time.perf_counter() - started < 10.0


def test_criterion_2_trdm_spectral_anchor():
    with criterion(2, "TrDM anchor: lambda=0 spectral subspace + monotonicity"):
        started = time.perf_counter()
        rng = np.random.default_rng(202)
        for _ in range(5):
            n = int(rng.integers(8, 21))
            d = int(rng.integers(3, 11))
            m = int(rng.integers(1, min(4, d) + 1))
            Xs = rng.normal(size=(n // 2, d))
            Xt = rng.normal(size=(n - n // 2, d))
            params = tf.TrDMParams(lambda_=0.0, m=m, max_iters=80)
            proj, history = tf.trdm_fit(Xs, Xt, params, return_history=True)
            X = np.vstack([Xs, Xt])
            M = tf.smoothness_quadratic(X, tf.diffusion_affinity(X, params))
            spectral = scipy.linalg.eigh(M)[1][:, :m]
            cosines = np.linalg.svd(spectral.T @ proj.W, compute_uv=False)
            angles = np.arccos(np.clip(cosines, -1.0, 1.0))
            assert angles.max() < 1e-4
            assert (np.diff(history) <= 1e-12).all()
        # monotonicity with the divergence term active
        Xs = rng.normal(size=(15, 5))
        Xt = rng.normal(size=(12, 5)) + [2, 0, 0, 0, 0]
        _, history = tf.trdm_fit(
            Xs, Xt, tf.TrDMParams(lambda_=5.0, m=2, max_iters=100), return_history=True
        )
        assert (np.diff(history) <= 1e-12).all()
        assert time.perf_counter() - started < 30.0


def test_criterion_3_divergence_correctness():
    with criterion(3, "divergence: FD gradients, identical multisets, symmetry"):
        rng = np.random.default_rng(303)
        h = 1e-5
        for _ in range(10):
            Ys = rng.normal(size=(int(rng.integers(2, 7)), 2))
            Yt = rng.normal(size=(int(rng.integers(2, 7)), 2))
            sigma = float(rng.uniform(0.4, 1.2))
            gs, gt = tf.kde_divergence_grad(Ys, Yt, sigma)
            fd_s = np.zeros_like(Ys)
            for i in range(Ys.shape[0]):
                for j in range(Ys.shape[1]):
                    up = Ys.copy(); up[i, j] += h
                    dn = Ys.copy(); dn[i, j] -= h
                    fd_s[i, j] = (tf.kde_divergence(up, Yt, sigma) - tf.kde_divergence(dn, Yt, sigma)) / (2 * h)
            fd_t = np.zeros_like(Yt)
            for i in range(Yt.shape[0]):
                for j in range(Yt.shape[1]):
                    up = Yt.copy(); up[i, j] += h
                    dn = Yt.copy(); dn[i, j] -= h
                    fd_t[i, j] = (tf.kde_divergence(Ys, up, sigma) - tf.kde_divergence(Ys, dn, sigma)) / (2 * h)
            scale = max(np.abs(fd_s).max(), np.abs(fd_t).max(), 1e-12)
            assert np.abs(gs - fd_s).max() / scale < 1e-5
            assert np.abs(gt - fd_t).max() / scale < 1e-5

            Y = rng.normal(size=(6, 3))
            assert tf.kde_divergence(Y, Y[rng.permutation(6)], 0.8) < 1e-12
            assert tf.kde_divergence(Ys, Yt, sigma) == tf.kde_divergence(Yt, Ys, sigma)


def test_criterion_4_transfer_benefit():
    with criterion(4, "transfer benefit on class-axis covariate shift"):
        started = time.perf_counter()
        div_decreased = []
        acc_trdm, acc_dm = [], []
        for seed in range(10):
            source, target = hz.synth_covariate_shift(40, 6, [3, 0, 0, 0, 0, 0], seed=seed)
            Xs, ys = source.features, source.labels
            Xt, yt = target.features, target.labels
            base = tf.trdm_fit(Xs, Xt, tf.TrDMParams(lambda_=0.0, m=2, max_iters=80))
            sigma = float(np.median(pdist(np.vstack([Xs, Xt]) @ base.W)))
            fitted = tf.trdm_fit(
                Xs, Xt, tf.TrDMParams(lambda_=1.0, m=2, sigma=sigma, max_iters=120)
            )
            d_base = tf.kde_divergence(Xs @ base.W, Xt @ base.W, sigma)
            d_fit = tf.kde_divergence(Xs @ fitted.W, Xt @ fitted.W, sigma)
            div_decreased.append(d_fit <= d_base + 1e-12)
            for W, bucket in ((fitted.W, acc_trdm), (base.W, acc_dm)):
                model = cl.KnnModel(coords=Xs @ W, labels=ys, k=5)
                bucket.append(float((cl.knn_predict(model, Xt @ W) == yt).mean()))
        assert all(div_decreased), f"divergence increased on seeds {np.flatnonzero(~np.array(div_decreased))}"
        assert np.mean(acc_trdm) >= np.mean(acc_dm) - 0.02
        assert time.perf_counter() - started < 120.0


def qp_oracle(K, y, C, iters=5000):
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    lr = 1.0 / max(np.linalg.eigvalsh(Q).max(), 1e-9)
    alpha = np.zeros(n)

    def project(a):
        lo, hi = -1e7, 1e7
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if y @ np.clip(a - mid * y, 0, C) > 0:
                lo = mid
            else:
                hi = mid
        return np.clip(a - 0.5 * (lo + hi) * y, 0, C)

    for _ in range(iters):
        alpha = project(alpha - lr * (Q @ alpha - 1.0))
    return alpha


def test_criterion_5_svm_suite():
    with criterion(5, "SVM: KKT at 1e-4, dual vs QP oracle at 1e-4, XOR bound"):
        rng = np.random.default_rng(505)
        # KKT on 20 instances
        for trial in range(20):
            n = 30
            X = rng.normal(size=(n, 3))
            y = np.sign(rng.normal(size=n))
            y[y == 0] = 1.0
            if abs(y.sum()) == n:
                y[0] = -y[0]
            C = float(rng.uniform(0.5, 3.0))
            kind = "rbf" if trial % 2 else "linear"
            model = cl.svm_train(X, y, kind=kind, C=C, gamma=0.5 if kind == "rbf" else None)
            _, margins = cl.svm_predict(model, X)
            yf = y * margins
            alpha = np.zeros(n)
            taken = set()
            for sv, coef in zip(model.support_vectors, model.dual_coefs):
                for r in range(n):
                    if r not in taken and np.array_equal(X[r], sv):
                        alpha[r] = coef / y[r]
                        taken.add(r)
                        break
            for r in range(n):
                if alpha[r] < 1e-9:
                    assert yf[r] >= 1 - 1e-4
                elif alpha[r] > C - 1e-9:
                    assert yf[r] <= 1 + 1e-4
                else:
                    assert abs(yf[r] - 1) <= 1e-4
        # dual objective vs oracle on <= 8-point instances
        for trial in range(6):
            n = int(rng.integers(4, 9))
            X = rng.normal(size=(n, 3))
            y = np.ones(n)
            y[: n // 2 + 1] = -1
            rng.shuffle(y)
            if abs(y.sum()) == n:
                y[0] = -y[0]
            C = float(rng.uniform(0.5, 4.0))
            kind = "rbf" if trial % 2 else "linear"
            gamma = 0.7 if kind == "rbf" else None
            model = cl.svm_train(X, y, kind=kind, C=C, gamma=gamma)
            K = cl._kernel_cross(kind, gamma, X, X)
            Q = (y[:, None] * y[None, :]) * K
            oracle = cl.svm_dual_objective(qp_oracle(K, y, C), Q)
            assert abs(model.dual_objective - oracle) <= 1e-4
        # XOR impossibility
        Xx = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
        yx = np.array([1.0, 1.0, -1.0, -1.0])
        mx = cl.svm_train(Xx, yx, kind="linear", C=10.0)
        assert float((cl.svm_predict(mx, Xx)[0] == yx).mean()) <= 0.75


def test_criterion_6_neural_suite():
    with criterion(6, "neural: FD gradients, reversal identity, lambda=0 equality"):
        rng = np.random.default_rng(606)
        # MLP gradient check at a non-kink point
        X = rng.normal(size=(8, 3))
        y = rng.integers(0, 2, 8)
        model = cl.MlpModel(
            W1=rng.normal(size=(3, 5)) * 0.7, b1=rng.normal(size=5) * 0.3,
            W2=rng.normal(size=(5, 2)) * 0.7, b2=rng.normal(size=2) * 0.3,
        )
        while np.abs(X @ model.W1 + model.b1).min() < 1e-3:
            X = rng.normal(size=(8, 3))
        _, grads = cl.mlp_gradients(model, X, y)
        h = 1e-5
        for name in ("W1", "b1", "W2", "b2"):
            arr = getattr(model, name)
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                up = arr.copy(); up[idx] += h
                dn = arr.copy(); dn[idx] -= h
                fields = {k: getattr(model, k) for k in ("W1", "b1", "W2", "b2")}
                lu = cl.mlp_gradients(cl.MlpModel(**{**fields, name: up}), X, y)[0]
                ld = cl.mlp_gradients(cl.MlpModel(**{**fields, name: dn}), X, y)[0]
                fd[idx] = (lu - ld) / (2 * h)
            assert np.abs(grads[name] - fd).max() / max(np.abs(fd).max(), 1e-12) < 1e-4

        # single-step gradient-reversal identity (exact)
        lambda_d, lr, seed = 0.7, 0.05, 31
        Xs = rng.normal(size=(6, 3))
        ys = rng.integers(0, 2, 6)
        Xt = rng.normal(size=(4, 3)) + 1.0
        Xall = np.vstack([Xs, Xt])
        yall = np.concatenate([ys, np.full(4, -1)])
        domains = np.concatenate([np.zeros(6, int), np.ones(4, int)])
        trained, _ = cl.da_mlp_train(
            Xall, yall, domains, lambda_d=lambda_d, hidden=4, epochs=1,
            learn_rate=lr, batch_size=6, seed=seed, n_classes=2,
        )
        rng_main, W1, b1, W2, b2 = cl._init_feature_params(seed, 3, 4, 2)
        rng_dom = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
        Wd = rng_dom.uniform(-np.sqrt(1.0), np.sqrt(1.0), size=(4, 2))
        perm_s = rng_main.permutation(6)
        perm_t = 6 + rng_dom.permutation(4)
        init = cl.MlpModel(W1=W1, b1=b1, W2=W2, b2=b2)
        da0 = cl.DaMlpModel(base=init, Wd=Wd, bd=np.zeros(2), lambda_d=lambda_d)
        _, g_class = cl.mlp_gradients(init, Xs[perm_s], ys[perm_s])
        _, g_dom = cl.domain_gradients(da0, Xall[np.concatenate([perm_s, perm_t])],
                                       domains[np.concatenate([perm_s, perm_t])])
        assert np.array_equal(trained.base.W1, W1 - lr * (g_class["W1"] - lambda_d * g_dom["W1"]))
        assert np.array_equal(trained.base.b1, b1 - lr * (g_class["b1"] - lambda_d * g_dom["b1"]))

        # lambda_d = 0 trajectory equality under matched seed/schedule
        Xs = rng.normal(size=(40, 3))
        ys = rng.integers(0, 2, 40)
        Xt = rng.normal(size=(25, 3)) + 2.0
        Xall = np.vstack([Xs, Xt])
        yall = np.concatenate([ys, np.full(25, -1)])
        domains = np.concatenate([np.zeros(40, int), np.ones(25, int)])
        plain, _ = cl.mlp_train(Xs, ys, hidden=5, epochs=4, learn_rate=0.01, batch_size=8,
                                seed=9, n_classes=2)
        da, _ = cl.da_mlp_train(Xall, yall, domains, lambda_d=0.0, hidden=5, epochs=4,
                                learn_rate=0.01, batch_size=8, seed=9, n_classes=2)
        assert np.array_equal(plain.W1, da.base.W1)
        assert np.array_equal(plain.b1, da.base.b1)
        assert np.array_equal(plain.W2, da.base.W2)
        assert np.array_equal(plain.b2, da.base.b2)


def _all_algorithms(epochs=15):
    return [
        {"name": "knn", "params": {"k": 5}},
        {"name": "svm_linear", "params": {}},
        {"name": "svm_rbf", "params": {}},
        {"name": "mlp", "params": {"epochs": epochs, "hidden": 16, "learn_rate": 0.03}},
        {"name": "da_mlp", "params": {"epochs": epochs, "hidden": 16, "learn_rate": 0.03}},
        {"name": "dm_knn", "params": {"m": 5}},
        {"name": "dm_1known", "params": {"m": 5}},
        {"name": "trdm_knn", "params": {"m": 3, "max_iters": 50}},
        {"name": "trdm_1known", "params": {"m": 3, "max_iters": 50}},
    ]


def test_criterion_7_cross_class_chance():
    with criterion(7, "cross-class: chance at strength 0, below-chance at -1"):
        started = time.perf_counter()
        cfg = hz.ExperimentConfig.from_dict({
            "protocol": "cross_class",
            "datasets": {"generator": {"kind": "cross_class", "n_per_class": 50, "d": 4,
                                        "analogy_strength": 0.0}},
            "algorithms": _all_algorithms(),
            "iterations": 10,
            "master_seed": 123,
            "split": {"test_fraction": 0.3},
        })
        report = hz.run_experiment(cfg)
        assert report.failed_iterations == 0
        for name, mean in report.mean.items():
            assert abs(mean - 0.5) <= 0.10, f"{name}: {mean}"
        flip = hz.ExperimentConfig.from_dict({
            "protocol": "cross_class",
            "datasets": {"generator": {"kind": "cross_class", "n_per_class": 50, "d": 4,
                                        "analogy_strength": -1.0}},
            "algorithms": [{"name": "knn", "params": {"k": 5}}],
            "iterations": 10,
            "master_seed": 123,
            "split": {"test_fraction": 0.3},
        })
        assert hz.run_experiment(flip).mean["knn"] <= 0.2
        assert time.perf_counter() - started < 120.0


def test_criterion_8_protocol_fidelity():
    with criterion(8, "protocol fidelity: determinism, split sizes, balancing"):
        cfg = hz.ExperimentConfig.from_dict({
            "protocol": "cross_domain",
            "datasets": {"generator": {"kind": "covariate_shift", "n_per_class": 30, "d": 3,
                                        "shift": 0.5}},
            "algorithms": [{"name": "knn", "params": {"k": 3}},
                           {"name": "dm_knn", "params": {"m": 4}}],
            "iterations": 3,
            "master_seed": 77,
            "split": {"test_fraction": 0.3},
        })
        sequential = hz.run_experiment(cfg, parallel=False)
        parallel = hz.run_experiment(cfg, parallel=True)
        rerun = hz.run_experiment(cfg, parallel=False)
        assert sequential.canonical_json() == parallel.canonical_json() == rerun.canonical_json()

        rng = np.random.default_rng(0)
        ds = Dataset(
            features=rng.normal(size=(100, 2)),
            labels=rng.integers(0, 2, 100),
            domains=np.zeros(100, int),
            class_names=("a", "b"),
        )
        train, val, test = split(ds, SplitSpec(test_fraction=0.3, val_fraction_of_train=0.3, seed=5))
        assert (len(train), len(val), len(test)) == (49, 21, 30)

        labels = np.concatenate([np.zeros(1100, int), np.ones(1300, int)])
        big = Dataset(
            features=rng.normal(size=(2400, 2)),
            labels=labels,
            domains=np.zeros(2400, int),
            class_names=("a", "b"),
        )
        balanced = balance_classes(big, 1000, seed=1)
        assert balanced.class_counts().tolist() == [1000, 1000]


def test_criterion_9_degradation_pipeline():
    with criterion(9, "degradation: stage sizes, identity resize, 2x1 vector"):
        rng = np.random.default_rng(909)
        chip = ip.ImageChip(rng.uniform(0, 1, (52, 37, 3)))
        out, (common, bottleneck) = ip.degrade(chip, 224, 224, return_stages=True)
        assert (common.width, common.height) == (50, 50)
        assert (bottleneck.width, bottleneck.height) == (10, 10)
        assert (out.width, out.height) == (224, 224)

        same = ip.resize_bilinear(chip, 37, 52)
        assert np.array_equal(same.pixels, chip.pixels)

        two = ip.ImageChip(np.array([[0.0, 1.0]])[:, :, None])
        vec = ip.resize_bilinear(two, 4, 1).pixels.reshape(-1)
        assert np.abs(vec - np.array([0.0, 0.25, 0.75, 1.0])).max() <= 1e-12


def test_criterion_10_feature_alignment_dimensionality():
    with criterion(10, "alignment reproduces the 22,622-column intersection"):
        total, shared = 60_484, 22_622
        names_a = tuple(f"g{i:05d}" for i in range(total))
        names_b = tuple(f"g{i:05d}" for i in range(total - shared, 2 * total - shared))
        assert len(names_a) == len(names_b) == total
        rng = np.random.default_rng(10)
        a = Dataset(
            features=rng.normal(size=(3, total)),
            labels=np.array([0, 1, 0]),
            domains=np.zeros(3, int),
            class_names=("pos", "neg"),
            feature_names=names_a,
        )
        b = Dataset(
            features=rng.normal(size=(2, total)),
            labels=np.array([1, 0]),
            domains=np.ones(2, int),
            class_names=("pos", "neg"),
            feature_names=names_b,
        )
        out_a, out_b = align_feature_spaces(a, b)
        assert out_a.dimension == out_b.dimension == shared
        assert out_a.feature_names == out_b.feature_names
