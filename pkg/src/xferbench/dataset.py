"""Tabular sample collections: loading, feature alignment, balancing, splits.

Every operation here is a pure function of its inputs (plus an explicit
seed where randomness is involved), so datasets can be shared freely
across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

__all__ = [
    "Domain",
    "Sample",
    "Dataset",
    "SplitSpec",
    "load_tabular",
    "save_tabular",
    "align_feature_spaces",
    "balance_classes",
    "split",
    "standardize",
]


class Domain(IntEnum):
    """Which population a sample belongs to."""

    SOURCE = 0
    TARGET = 1


@dataclass(frozen=True)
class Sample:
    """A single observation: feature vector, optional class label, domain tag."""

    id: str
    features: np.ndarray
    label: int | None
    domain: Domain


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """A fixed-dimension collection of samples with shared class vocabulary.

    Parameters
    ----------
    features : (n, d) float array
    labels : (n,) int array
        Class indices into ``class_names``; ``-1`` marks an unlabeled sample.
    domains : (n,) int array
        ``Domain`` values per sample.
    class_names : tuple of str
        Ordered, unique class vocabulary.
    feature_names : tuple of str, optional
        Ordered, unique column names of length d.
    ids : tuple of str, optional
        Opaque per-sample identifiers; defaults to stringified row indices.
    """

    features: np.ndarray
    labels: np.ndarray
    domains: np.ndarray
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...] | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        n = feats.shape[0]
        labels = np.asarray(self.labels, dtype=np.int64)
        domains = np.asarray(self.domains, dtype=np.int64)
        if labels.shape != (n,) or domains.shape != (n,):
            raise ValueError("labels/domains must be 1-D arrays matching the sample count")
        if labels.size and labels.max(initial=-1) >= len(self.class_names):
            raise ValueError("label index out of range of class_names")
        if labels.size and labels.min(initial=0) < -1:
            raise ValueError("labels must be class indices or -1 for unlabeled")
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != feats.shape[1]:
                raise ValueError("feature_names length must equal the feature dimension")
            if len(set(names)) != len(names):
                raise ValueError("feature_names must be unique")
            object.__setattr__(self, "feature_names", names)
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class_names must be unique")
        object.__setattr__(self, "class_names", tuple(self.class_names))
        ids = tuple(str(i) for i in range(n)) if self.ids is None else tuple(self.ids)
        if len(ids) != n:
            raise ValueError("ids length must equal the sample count")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", _frozen(feats, np.float64))
        object.__setattr__(self, "labels", _frozen(labels, np.int64))
        object.__setattr__(self, "domains", _frozen(domains, np.int64))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        label = int(self.labels[i])
        return Sample(
            id=self.ids[i],
            features=self.features[i],
            label=None if label < 0 else label,
            domain=Domain(int(self.domains[i])),
        )

    def subset(self, indices) -> "Dataset":
        """Row subset preserving class vocabulary and feature names."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            domains=self.domains[idx],
            class_names=self.class_names,
            feature_names=self.feature_names,
            ids=tuple(self.ids[int(i)] for i in idx),
        )

    def class_counts(self) -> np.ndarray:
        """Per-class sample counts (unlabeled rows excluded)."""
        labeled = self.labels[self.labels >= 0]
        return np.bincount(labeled, minlength=len(self.class_names))


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test partition sizes and the seed that fixes them.

    ``test_fraction`` of the whole set goes to test, and
    ``val_fraction_of_train`` of the remainder goes to validation.
    """

    test_fraction: float
    val_fraction_of_train: float = 0.0
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must lie strictly inside (0, 1)")
        if not (0.0 <= self.val_fraction_of_train < 1.0):
            raise ValueError("val_fraction_of_train must lie in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def load_tabular(path, label_column: str, domain: Domain = Domain.SOURCE) -> Dataset:
    """Read a header-first CSV into a Dataset.

    One sample per data row; features are all columns except
    ``label_column`` parsed as 64-bit floats; class indices are assigned
    by first appearance of each label value.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ValueError
        On a missing label column, ragged rows, or non-numeric feature
        cells.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = rows[0]
    if label_column not in header:
        raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    feature_names = tuple(name for i, name in enumerate(header) if i != label_idx)

    features = []
    class_names: list[str] = []
    labels = []
    for row_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{row_no}: ragged row, expected {len(header)} cells, got {len(row)}")
        try:
            features.append([float(cell) for i, cell in enumerate(row) if i != label_idx])
        except ValueError as exc:
            raise ValueError(f"{path}:{row_no}: non-numeric feature cell ({exc})") from None
        value = row[label_idx]
        if value not in class_names:
            class_names.append(value)
        labels.append(class_names.index(value))

    n = len(features)
    return Dataset(
        features=np.asarray(features, dtype=np.float64).reshape(n, len(feature_names)),
        labels=np.asarray(labels, dtype=np.int64),
        domains=np.full(n, int(domain), dtype=np.int64),
        class_names=tuple(class_names),
        feature_names=feature_names,
    )


def save_tabular(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write a Dataset back to CSV so that ``load_tabular`` round-trips it.

    Floats are written with ``repr`` so values survive the round trip
    bit-for-bit.
    """
    names = dataset.feature_names
    if names is None:
        names = tuple(f"f{i}" for i in range(dataset.dimension))
    if label_column in names:
        raise ValueError(f"label column {label_column!r} collides with a feature name")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [label_column])
        for i in range(len(dataset)):
            label = int(dataset.labels[i])
            writer.writerow(
                [repr(float(v)) for v in dataset.features[i]]
                + [dataset.class_names[label] if label >= 0 else ""]
            )


def align_feature_spaces(a: Dataset, b: Dataset) -> tuple[Dataset, Dataset]:
    """Restrict two datasets to their shared feature names.

    Both outputs carry the same columns: the name intersection in
    lexicographic order. Sample order, labels and domains are unchanged.

    Raises
    ------
    ValueError
        If either input lacks feature names, or the intersection is empty.
    """
    if a.feature_names is None or b.feature_names is None:
        raise ValueError("both datasets must carry feature_names to be aligned")
    shared = sorted(set(a.feature_names) & set(b.feature_names))
    if not shared:
        raise ValueError("feature-name intersection is empty; nothing to align")

    def restrict(d: Dataset) -> Dataset:
        positions = {name: i for i, name in enumerate(d.feature_names)}
        col = [positions[name] for name in shared]
        return Dataset(
            features=d.features[:, col],
            labels=d.labels,
            domains=d.domains,
            class_names=d.class_names,
            feature_names=tuple(shared),
            ids=d.ids,
        )

    return restrict(a), restrict(b)


def balance_classes(d: Dataset, per_class: int, seed: int) -> Dataset:
    """Draw exactly ``per_class`` samples per class without replacement.

    Selected rows keep their original relative order. Raises ValueError
    if any class has fewer than ``per_class`` samples.
    """
    if per_class <= 0:
        raise ValueError("per_class must be positive")
    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    for c in range(len(d.class_names)):
        members = np.flatnonzero(d.labels == c)
        if members.size < per_class:
            raise ValueError(
                f"class {d.class_names[c]!r} has {members.size} samples, need {per_class}"
            )
        keep.append(rng.choice(members, size=per_class, replace=False))
    return d.subset(np.sort(np.concatenate(keep)))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _partition_counts(n: int, spec: SplitSpec) -> tuple[int, int]:
    n_test = _round_half_up(spec.test_fraction * n)
    n_val = _round_half_up(spec.val_fraction_of_train * (n - n_test))
    return n_test, n_val


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into (train, val, test) per the given fractions and seed.

    Partitions are disjoint, cover the input, and are a pure function of
    (input, seed). Uniform-random by default; ``spec.stratified`` applies
    the same fractions within each class instead.

    Raises
    ------
    ValueError
        If the dataset is empty or a partition with a nonzero fraction
        rounds to zero samples (or training would be left empty).
    """
    n = len(d)
    if n == 0:
        raise ValueError("cannot split an empty dataset")

    if spec.stratified:
        rng = np.random.default_rng(spec.seed)
        test_parts, val_parts, train_parts = [], [], []
        for c in range(len(d.class_names)):
            members = np.flatnonzero(d.labels == c)
            perm = members[rng.permutation(members.size)]
            n_test, n_val = _partition_counts(members.size, spec)
            test_parts.append(perm[:n_test])
            val_parts.append(perm[n_test : n_test + n_val])
            train_parts.append(perm[n_test + n_val :])
        test_idx = np.concatenate(test_parts)
        val_idx = np.concatenate(val_parts)
        train_idx = np.concatenate(train_parts)
    else:
        perm = np.random.default_rng(spec.seed).permutation(n)
        n_test, n_val = _partition_counts(n, spec)
        test_idx = perm[:n_test]
        val_idx = perm[n_test : n_test + n_val]
        train_idx = perm[n_test + n_val :]

    if test_idx.size == 0:
        raise ValueError("test partition is empty for a nonzero test_fraction")
    if spec.val_fraction_of_train > 0 and val_idx.size == 0:
        raise ValueError("validation partition is empty for a nonzero val fraction")
    if train_idx.size == 0:
        raise ValueError("training partition is empty")
    return (
        d.subset(np.sort(train_idx)),
        d.subset(np.sort(val_idx)),
        d.subset(np.sort(test_idx)),
    )


def standardize(d: Dataset, mean=None, std=None) -> Dataset:
    """Per-feature z-score; zero-variance columns are left centered only.

    With ``mean``/``std`` given (e.g. fitted on a training split), those
    statistics are applied instead of the dataset's own. Off by default
    everywhere in the harness.
    """
    if mean is None:
        mean = d.features.mean(axis=0)
    if std is None:
        std = d.features.std(axis=0)
    std = np.where(np.asarray(std) > 0, std, 1.0)
    return replace(d, features=(d.features - mean) / std)
