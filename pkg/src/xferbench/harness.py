"""Config-driven experiment runner for the three transfer protocols.

A protocol builds, per iteration, a labeled training pool and a target
evaluation set: ``degraded_transfer`` pushes the held-out test chips
through the low-resolution pipeline, ``cross_class`` and ``cross_domain``
evaluate on the full (never split) target population. Algorithms declare
whether they are transductive; only transductive ones ever see unlabeled
target features, and per-(iteration, algorithm) seeds are stable hashes
so adding an algorithm never perturbs another's results.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classify, diffusion, imageprep, transfer
from .dataset import (
    Dataset,
    Domain,
    SplitSpec,
    align_feature_spaces,
    balance_classes,
    load_tabular,
    split,
    standardize,
)

__all__ = [
    "ConfigError",
    "AlgorithmSpec",
    "ExperimentConfig",
    "IterationResult",
    "ExperimentReport",
    "accuracy",
    "run_experiment",
    "synth_covariate_shift",
    "synth_cross_class",
    "synth_chips",
    "emit_report",
    "report_from_json",
    "ALGORITHMS",
]

PROTOCOLS = ("degraded_transfer", "cross_class", "cross_domain")


class ConfigError(ValueError):
    """Raised when an experiment configuration cannot be honored."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    datasets: dict
    algorithms: tuple[AlgorithmSpec, ...]
    iterations: int = 10
    master_seed: int = 0
    split: SplitSpec = SplitSpec(test_fraction=0.3, val_fraction_of_train=0.0)
    balance_per_class: int | None = None
    stopping_epochs: dict | None = None
    standardize_features: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        for spec in self.algorithms:
            if spec.name not in ALGORITHMS:
                raise ConfigError(
                    f"unknown algorithm {spec.name!r}; known: {sorted(ALGORITHMS)}"
                )
        object.__setattr__(self, "algorithms", tuple(self.algorithms))

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        try:
            split_raw = dict(raw.get("split", {}))
            spec = SplitSpec(
                test_fraction=float(split_raw.get("test_fraction", 0.3)),
                val_fraction_of_train=float(split_raw.get("val_fraction_of_train", 0.0)),
                seed=int(split_raw.get("seed", 0)),
                stratified=bool(split_raw.get("stratified", False)),
            )
            algorithms = tuple(
                AlgorithmSpec(name=a["name"], params=dict(a.get("params", {})))
                for a in raw["algorithms"]
            )
            return ExperimentConfig(
                protocol=raw["protocol"],
                datasets=dict(raw["datasets"]),
                algorithms=algorithms,
                iterations=int(raw.get("iterations", 10)),
                master_seed=int(raw.get("master_seed", 0)),
                split=spec,
                balance_per_class=(
                    int(raw["balance_per_class"]) if raw.get("balance_per_class") is not None else None
                ),
                stopping_epochs=dict(raw["stopping_epochs"]) if raw.get("stopping_epochs") else None,
                standardize_features=bool(raw.get("standardize", False)),
                output_dir=raw.get("output_dir"),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "datasets": self.datasets,
            "algorithms": [{"name": a.name, "params": a.params} for a in self.algorithms],
            "iterations": self.iterations,
            "master_seed": self.master_seed,
            "split": {
                "test_fraction": self.split.test_fraction,
                "val_fraction_of_train": self.split.val_fraction_of_train,
                "seed": self.split.seed,
                "stratified": self.split.stratified,
            },
            "balance_per_class": self.balance_per_class,
            "stopping_epochs": self.stopping_epochs,
            "standardize": self.standardize_features,
            "output_dir": self.output_dir,
        }


# ---------------------------------------------------------------------------
# Synthetic benchmark generators
# ---------------------------------------------------------------------------


def synth_covariate_shift(n_per_class: int, d: int, shift, seed: int) -> tuple[Dataset, Dataset]:
    """Two-blob task whose target distribution is a translated copy.

    Source: unit-covariance Gaussians at -2*e1 (class 0) and +2*e1
    (class 1). Target: fresh draws from the same blobs translated by the
    shift vector; labels are preserved.
    """
    if n_per_class < 1 or d < 1:
        raise ValueError("need n_per_class >= 1 and d >= 1")
    shift = np.broadcast_to(np.asarray(shift, dtype=np.float64), (d,))
    rng = np.random.default_rng(seed)
    means = np.zeros((2, d))
    means[0, 0] = -2.0
    means[1, 0] = 2.0

    def blobs(offset, domain):
        feats = np.vstack(
            [rng.normal(means[c] + offset, 1.0, size=(n_per_class, d)) for c in (0, 1)]
        )
        labels = np.repeat(np.arange(2), n_per_class)
        return Dataset(
            features=feats,
            labels=labels,
            domains=np.full(2 * n_per_class, int(domain), dtype=np.int64),
            class_names=("class0", "class1"),
        )

    return blobs(np.zeros(d), Domain.SOURCE), blobs(shift, Domain.TARGET)


def synth_cross_class(n_per_class: int, d: int, analogy_strength: float, seed: int) -> tuple[Dataset, Dataset]:
    """Cross-class task: target prototypes blended toward/away from the source's.

    Target class means are analogy_strength times the source means, so
    strength 1 reproduces the source structure, 0 collapses both target
    classes onto one uninformative blob, and -1 swaps the correspondence.
    """
    if not -1.0 <= analogy_strength <= 1.0:
        raise ValueError("analogy_strength must lie in [-1, 1]")
    if n_per_class < 1 or d < 1:
        raise ValueError("need n_per_class >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    means = np.zeros((2, d))
    means[0, 0] = -2.0
    means[1, 0] = 2.0

    def blobs(centers, domain, names):
        feats = np.vstack(
            [rng.normal(centers[c], 1.0, size=(n_per_class, d)) for c in (0, 1)]
        )
        labels = np.repeat(np.arange(2), n_per_class)
        return Dataset(
            features=feats,
            labels=labels,
            domains=np.full(2 * n_per_class, int(domain), dtype=np.int64),
            class_names=names,
        )

    source = blobs(means, Domain.SOURCE, ("source_a", "source_b"))
    target = blobs(analogy_strength * means, Domain.TARGET, ("target_a", "target_b"))
    return source, target


def synth_chips(n_per_class: int, chip_w: int, chip_h: int, seed: int, noise: float = 0.15) -> Dataset:
    """Tiny synthetic chip corpus whose classes differ only in fine structure.

    Class "solid" carries one thick bright bar, class "split" two thin
    bars one row apart, over uniform background noise. The split bars
    merge into a solid-looking smear once a chip passes the 10x10
    degradation bottleneck, so high-resolution accuracy stays easy while
    degraded accuracy genuinely suffers. Stand-in imagery for exercising
    the degradation protocol without any external dataset.
    """
    if n_per_class < 1 or chip_w < 4 or chip_h < 4:
        raise ValueError("need n_per_class >= 1 and chips at least 4x4")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    center = chip_h // 2
    feats = []
    labels = []
    for c in (0, 1):
        for _ in range(n_per_class):
            img = rng.uniform(0.0, noise, size=(chip_h, chip_w))
            level = 1.0 - rng.uniform(0, noise)
            if c == 0:
                img[center - 1 : center + 1, :] = level
            else:
                img[center - 2, :] = level
                img[center + 1, :] = level
            feats.append(img.reshape(-1))
            labels.append(c)
    return Dataset(
        features=np.vstack(feats),
        labels=np.asarray(labels, dtype=np.int64),
        domains=np.zeros(len(labels), dtype=np.int64),
        class_names=("solid", "split"),
    )


# ---------------------------------------------------------------------------
# Algorithm registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationData:
    """Everything one iteration hands to the algorithms.

    Non-transductive algorithms receive only (train, val); transductive
    ones additionally get the unlabeled target features. ``target_labels``
    exist purely for scoring.
    """

    train: Dataset
    val: Dataset | None
    target_features: np.ndarray
    target_labels: np.ndarray
    highres_features: np.ndarray | None = None


def _epochs_for(name: str, params: dict, config: ExperimentConfig) -> int:
    if config.stopping_epochs and name in config.stopping_epochs:
        return int(config.stopping_epochs[name])
    return int(params.get("epochs", 20))


def _run_knn(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    model = classify.KnnModel(
        coords=data.train.features, labels=data.train.labels, k=int(params.get("k", 5))
    )
    return classify.knn_predict(model, data.target_features)


def _run_svm(kind: str):
    def run(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
        model = classify.svm_train_ovr(
            data.train.features,
            data.train.labels,
            kind=kind,
            C=float(params.get("C", 1.0)),
            gamma=params.get("gamma"),
            tol=float(params.get("tol", classify.SVM_KKT_TOL)),
        )
        return classify.svm_predict_ovr(model, data.target_features)

    return run


def _run_mlp(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    has_val = data.val is not None and len(data.val) > 0
    model, _ = classify.mlp_train(
        data.train.features,
        data.train.labels,
        hidden=int(params.get("hidden", 64)),
        epochs=_epochs_for("mlp", params, config),
        learn_rate=float(params.get("learn_rate", 1e-2)),
        batch_size=int(params.get("batch_size", 32)),
        seed=seed,
        n_classes=len(data.train.class_names),
        X_val=data.val.features if has_val else None,
        y_val=data.val.labels if has_val else None,
    )
    pred, _ = classify.mlp_predict(model, data.target_features)
    return pred


def _run_da_mlp(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    has_val = data.val is not None and len(data.val) > 0
    X = np.vstack([data.train.features, data.target_features])
    y = np.concatenate(
        [data.train.labels, np.full(len(data.target_features), -1, dtype=np.int64)]
    )
    domains = np.concatenate(
        [np.zeros(len(data.train), dtype=np.int64), np.ones(len(data.target_features), dtype=np.int64)]
    )
    model, _ = classify.da_mlp_train(
        X,
        y,
        domains,
        lambda_d=float(params.get("lambda_d", 1.0)),
        hidden=int(params.get("hidden", 64)),
        epochs=_epochs_for("da_mlp", params, config),
        learn_rate=float(params.get("learn_rate", 1e-2)),
        batch_size=int(params.get("batch_size", 32)),
        seed=seed,
        n_classes=len(data.train.class_names),
        X_val=data.val.features if has_val else None,
        y_val=data.val.labels if has_val else None,
    )
    pred, _ = classify.mlp_predict(model.base, data.target_features)
    return pred


def _diffusion_params(params: dict, n_joint: int) -> diffusion.DiffusionParams:
    m = int(params.get("m", 10))
    return diffusion.DiffusionParams(
        gamma=params.get("gamma"),
        alpha=float(params.get("alpha", 1.0)),
        k=int(params["k_graph"]) if params.get("k_graph") is not None else None,
        m=min(m, n_joint - 1),
        t=int(params.get("t", 1)),
    )


def _dm_embedding(data: IterationData, params: dict):
    target = Dataset(
        features=data.target_features,
        labels=np.full(len(data.target_features), -1, dtype=np.int64),
        domains=np.ones(len(data.target_features), dtype=np.int64),
        class_names=data.train.class_names,
    )
    n_joint = len(data.train) + len(target)
    embedding, domains = diffusion.embed_joint(data.train, target, _diffusion_params(params, n_joint))
    source_rows = np.flatnonzero(domains == 0)
    target_rows = np.flatnonzero(domains == 1)
    return embedding.coords, source_rows, target_rows


def _run_dm_knn(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    coords, source_rows, target_rows = _dm_embedding(data, params)
    model = classify.KnnModel(
        coords=coords[source_rows], labels=data.train.labels, k=int(params.get("k", 5))
    )
    return classify.knn_predict(model, coords[target_rows])


def _run_dm_1known(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    coords, source_rows, target_rows = _dm_embedding(data, params)
    labels = np.concatenate([data.train.labels, data.target_labels])
    model = classify.one_known_rule(
        coords, target_rows, labels, seed=seed, n_classes=len(data.train.class_names)
    )
    return classify.knn_predict(model, coords[target_rows])


def _trdm_params(params: dict) -> transfer.TrDMParams:
    return transfer.TrDMParams(
        lambda_=float(params.get("lambda", 1.0)),
        k=int(params["k_graph"]) if params.get("k_graph") is not None else None,
        t=int(params.get("t", 1)),
        gamma=params.get("gamma"),
        sigma=params.get("sigma"),
        learn_rate=float(params.get("learn_rate", 0.1)),
        max_iters=int(params.get("max_iters", 200)),
        tol=float(params.get("tol", 1e-8)),
        alpha=float(params.get("alpha", 1.0)),
        m=int(params.get("m", 10)),
    )


def _trdm_projection(data: IterationData, params: dict, seed: int):
    p = _trdm_params(params)
    p = replace(p, m=min(p.m, data.train.features.shape[1]))
    projection = transfer.trdm_fit(data.train.features, data.target_features, p, seed=seed)
    return (
        transfer.trdm_embed(projection, data.train.features),
        transfer.trdm_embed(projection, data.target_features),
    )


def _run_trdm_knn(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    ys, yt = _trdm_projection(data, params, seed)
    model = classify.KnnModel(coords=ys, labels=data.train.labels, k=int(params.get("k", 5)))
    return classify.knn_predict(model, yt)


def _run_trdm_1known(data: IterationData, params: dict, seed: int, config) -> np.ndarray:
    ys, yt = _trdm_projection(data, params, seed)
    coords = np.vstack([ys, yt])
    labels = np.concatenate([data.train.labels, data.target_labels])
    target_rows = np.arange(len(ys), len(coords))
    model = classify.one_known_rule(
        coords, target_rows, labels, seed=seed, n_classes=len(data.train.class_names)
    )
    return classify.knn_predict(model, yt)


# name -> (runner, consumes unlabeled target features during training)
ALGORITHMS = {
    "knn": (_run_knn, False),
    "svm_linear": (_run_svm("linear"), False),
    "svm_rbf": (_run_svm("rbf"), False),
    "mlp": (_run_mlp, False),
    "da_mlp": (_run_da_mlp, True),
    "dm_knn": (_run_dm_knn, True),
    "dm_1known": (_run_dm_1known, True),
    "trdm_knn": (_run_trdm_knn, True),
    "trdm_1known": (_run_trdm_1known, True),
}


def is_transductive(name: str) -> bool:
    return ALGORITHMS[name][1]


# ---------------------------------------------------------------------------
# Data construction per protocol
# ---------------------------------------------------------------------------


def _stable_seed(master_seed: int, iteration: int, scope: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{iteration}:{scope}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _load_dataset_spec(spec: dict, domain: Domain, seed: int):
    kind = spec.get("kind")
    if kind == "csv":
        return load_tabular(spec["path"], spec["label_column"], domain)
    if kind == "chips":
        size = spec.get("size", [20, 20])
        return imageprep.chip_dataset_from_annotations(
            spec["annotations"],
            chip_w=int(size[0]),
            chip_h=int(size[1]),
            domain=domain,
            grayscale=bool(spec.get("grayscale", False)),
            images_root=spec.get("images_root"),
        )
    if kind == "synth_chips":
        size = spec.get("size", [20, 20])
        return synth_chips(
            int(spec["n_per_class"]), int(size[0]), int(size[1]),
            seed=seed, noise=float(spec.get("noise", 0.15)),
        )
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _build_pools(config: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset | None, dict]:
    """Resolve the config's dataset references into source/target pools."""
    ds = config.datasets
    meta: dict = {}
    if "generator" in ds:
        gen = ds["generator"]
        kind = gen.get("kind")
        if kind == "covariate_shift":
            source, target = synth_covariate_shift(
                int(gen["n_per_class"]), int(gen["d"]), gen.get("shift", 0.0), seed=seed
            )
        elif kind == "cross_class":
            source, target = synth_cross_class(
                int(gen["n_per_class"]), int(gen["d"]), float(gen["analogy_strength"]), seed=seed
            )
        elif kind == "synth_chips":
            size = gen.get("size", [20, 20])
            source = synth_chips(
                int(gen["n_per_class"]), int(size[0]), int(size[1]),
                seed=seed, noise=float(gen.get("noise", 0.15)),
            )
            target = None
            meta["chip_shape"] = (int(size[1]), int(size[0]), 1)
        else:
            raise ConfigError(f"unknown generator kind {kind!r}")
        return source, target, meta

    if "source" not in ds:
        raise ConfigError("datasets must define 'source' (or a 'generator')")
    source = _load_dataset_spec(ds["source"], Domain.SOURCE, seed)
    target = _load_dataset_spec(ds["target"], Domain.TARGET, seed) if "target" in ds else None
    src_spec = ds["source"]
    if src_spec.get("kind") in ("chips", "synth_chips"):
        size = src_spec.get("size", [20, 20])
        channels = 1 if src_spec.get("kind") == "synth_chips" or src_spec.get("grayscale") else 3
        meta["chip_shape"] = (int(size[1]), int(size[0]), channels)
    return source, target, meta


def _degrade_features(features: np.ndarray, chip_shape) -> np.ndarray:
    h, w, c = chip_shape
    out = np.empty_like(features)
    for i, row in enumerate(features):
        chip = imageprep.ImageChip(row.reshape(h, w, c))
        out[i] = imageprep.flatten(imageprep.degrade(chip, w, h))
    return out


def _align_cross_domain(source: Dataset, target: Dataset):
    if source.feature_names is not None and target.feature_names is not None:
        if source.feature_names != target.feature_names:
            return align_feature_spaces(source, target)
    if source.dimension != target.dimension:
        raise ConfigError(
            "source/target dimensions differ and no feature names are available to align them"
        )
    return source, target


def _iteration_data(config: ExperimentConfig, iteration: int) -> IterationData:
    seed = _stable_seed(config.master_seed, iteration, "data")
    source, target, meta = _build_pools(config, seed)
    spec = replace(config.split, seed=_stable_seed(config.master_seed, iteration, "split"))

    if config.protocol == "degraded_transfer":
        if "chip_shape" not in meta:
            raise ConfigError("degraded_transfer requires a chip dataset (chips/synth_chips)")
        pool = source
        if config.balance_per_class:
            pool = balance_classes(pool, config.balance_per_class, seed)
        train, val, test = split(pool, spec)
        highres = test.features
        degraded = _degrade_features(test.features, meta["chip_shape"])
        data = IterationData(
            train=train,
            val=val if len(val) else None,
            target_features=degraded,
            target_labels=test.labels,
            highres_features=highres,
        )
    else:
        if target is None:
            raise ConfigError(f"{config.protocol} requires a target dataset")
        if config.protocol == "cross_domain":
            source, target = _align_cross_domain(source, target)
        pool = source
        if config.balance_per_class:
            pool = balance_classes(pool, config.balance_per_class, seed)
            if config.protocol == "cross_class":
                target = balance_classes(target, config.balance_per_class, seed + 1)
        # The target set is never split for these protocols: the full
        # target population is the test set.
        train, val, _source_holdout = split(pool, spec)
        data = IterationData(
            train=train,
            val=val if len(val) else None,
            target_features=target.features,
            target_labels=target.labels,
        )

    if config.standardize_features:
        mean = data.train.features.mean(axis=0)
        std = data.train.features.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        data = IterationData(
            train=standardize(data.train, mean, std),
            val=standardize(data.val, mean, std) if data.val is not None else None,
            target_features=(data.target_features - mean) / std,
            target_labels=data.target_labels,
            highres_features=(
                (data.highres_features - mean) / std if data.highres_features is not None else None
            ),
        )
    return data


# ---------------------------------------------------------------------------
# Running and reporting
# ---------------------------------------------------------------------------


def accuracy(predicted, truth) -> float:
    """Fraction of matching class indices."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("prediction/truth length mismatch")
    if predicted.size == 0:
        raise ValueError("cannot score an empty prediction set")
    return float((predicted == truth).mean())


@dataclass(frozen=True)
class IterationResult:
    iteration: int
    accuracy: dict
    accuracy_highres: dict | None = None
    errors: dict | None = None

    def to_dict(self) -> dict:
        out = {"iteration": self.iteration, "accuracy": self.accuracy}
        if self.accuracy_highres is not None:
            out["accuracy_highres"] = self.accuracy_highres
        if self.errors:
            out["errors"] = self.errors
        return out


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    iterations: tuple[IterationResult, ...]
    mean: dict
    std: dict
    timings: dict

    def to_dict(self, include_timings: bool = True) -> dict:
        out = {
            "config": self.config,
            "iterations": [r.to_dict() for r in self.iterations],
            "mean": self.mean,
            "std": self.std,
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def canonical_json(self) -> str:
        """Deterministic serialization (timings excluded) for equality checks."""
        return json.dumps(self.to_dict(include_timings=False), sort_keys=True)

    @property
    def failed_iterations(self) -> int:
        return sum(1 for r in self.iterations if r.errors)


def _aggregate(results: list[IterationResult], names) -> tuple[dict, dict]:
    mean, std = {}, {}
    for name in names:
        values = np.asarray(
            [r.accuracy[name] for r in results if name in r.accuracy], dtype=np.float64
        )
        if values.size == 0:
            mean[name] = None
            std[name] = None
            continue
        mean[name] = float(values.mean())
        std[name] = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, std


def _run_iteration(config: ExperimentConfig, iteration: int) -> tuple[IterationResult, dict]:
    timings: dict = {}
    try:
        data = _iteration_data(config, iteration)
    except ConfigError:
        raise
    except Exception as exc:  # data construction failed: whole iteration is lost
        return (
            IterationResult(
                iteration=iteration,
                accuracy={},
                errors={"__iteration__": f"{type(exc).__name__}: {exc}"},
            ),
            timings,
        )

    accs: dict = {}
    highres: dict = {}
    errors: dict = {}
    for spec in config.algorithms:
        runner, transductive = ALGORITHMS[spec.name]
        seed = _stable_seed(config.master_seed, iteration, spec.name)
        started = time.perf_counter()
        try:
            pred = runner(data, spec.params, seed, config)
            accs[spec.name] = accuracy(pred, data.target_labels)
            if data.highres_features is not None:
                hi_data = IterationData(
                    train=data.train,
                    val=data.val,
                    target_features=data.highres_features,
                    target_labels=data.target_labels,
                )
                hi_pred = runner(hi_data, spec.params, seed, config)
                highres[spec.name] = accuracy(hi_pred, data.target_labels)
        except Exception as exc:
            errors[spec.name] = f"{type(exc).__name__}: {exc}"
        timings[spec.name] = time.perf_counter() - started
    return (
        IterationResult(
            iteration=iteration,
            accuracy=accs,
            accuracy_highres=highres or None,
            errors=errors or None,
        ),
        timings,
    )


def run_experiment(config: ExperimentConfig, parallel: bool = False) -> ExperimentReport:
    """Execute every (iteration, algorithm) cell and aggregate accuracies.

    Iterations are independent (each owns seeds derived from the master
    seed) so sequential and parallel execution produce identical reports.
    Failed cells are flagged in the per-iteration table and excluded from
    the mean/std aggregation.
    """
    indices = list(range(config.iterations))
    if parallel:
        with ThreadPoolExecutor() as pool:
            outcomes = list(pool.map(lambda i: _run_iteration(config, i), indices))
    else:
        outcomes = [_run_iteration(config, i) for i in indices]

    results = [outcome[0] for outcome in outcomes]
    timings: dict = {spec.name: 0.0 for spec in config.algorithms}
    for _, t in outcomes:
        for name, dt in t.items():
            timings[name] = timings.get(name, 0.0) + dt
    names = [spec.name for spec in config.algorithms]
    mean, std = _aggregate(results, names)
    return ExperimentReport(
        config=config.to_dict(),
        iterations=tuple(results),
        mean=mean,
        std=std,
        timings=timings,
    )


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write report.json, iterations.csv and accuracy.svg into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(json_path)

    csv_path = out / "iterations.csv"
    names = [a["name"] for a in report.config["algorithms"]]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "algorithm", "accuracy", "accuracy_highres", "error"])
        for r in report.iterations:
            for name in names:
                hi = (r.accuracy_highres or {}).get(name, "")
                err = (r.errors or {}).get(name, (r.errors or {}).get("__iteration__", ""))
                writer.writerow(
                    [r.iteration, name, r.accuracy.get(name, ""), hi, err]
                )
    written.append(csv_path)

    svg_path = out / "accuracy.svg"
    _accuracy_svg(report, svg_path)
    written.append(svg_path)
    return written


def _accuracy_svg(report: ExperimentReport, path) -> None:
    import matplotlib

    from matplotlib.figure import Figure

    names = [a["name"] for a in report.config["algorithms"]]
    means = [report.mean.get(n) if report.mean.get(n) is not None else 0.0 for n in names]
    stds = [report.std.get(n) if report.std.get(n) is not None else 0.0 for n in names]

    fig = Figure(figsize=(max(4.0, 0.9 * len(names) + 1.5), 3.5))
    ax = fig.add_subplot(111)
    bars = ax.bar(range(len(names)), means, yerr=stds, capsize=4, color="#4878d0")
    for name, bar in zip(names, bars):
        bar.set_gid(f"bar-{name}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("target accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("mean accuracy over iterations (whiskers: +/-1 std)")
    fig.tight_layout()
    with matplotlib.rc_context({"svg.fonttype": "none"}):
        fig.savefig(path, format="svg")


def report_from_json(path) -> ExperimentReport:
    """Rebuild an ExperimentReport from an emitted report.json."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    iterations = tuple(
        IterationResult(
            iteration=int(r["iteration"]),
            accuracy=r.get("accuracy", {}),
            accuracy_highres=r.get("accuracy_highres"),
            errors=r.get("errors"),
        )
        for r in raw["iterations"]
    )
    return ExperimentReport(
        config=raw["config"],
        iterations=iterations,
        mean=raw["mean"],
        std=raw["std"],
        timings=raw.get("timings", {}),
    )
