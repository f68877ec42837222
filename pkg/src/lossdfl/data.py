"""Datasets, synthetic generation, CSV ingestion and client partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CSVParseError

# Per-class image counts of the three PlantVillage subsets; reused as cluster sizes.
CLASS_COUNTS: dict[str, tuple[int, ...]] = {
    "grape": (1180, 1383, 1076, 423),
    "apple": (630, 621, 275, 1645),
    "corn": (513, 1192, 1162, 985),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels length must equal the number of feature rows")
        if features.shape[0] == 0:
            raise ValueError("dataset must contain at least one sample")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise ValueError("labels must lie in [0, class_count)")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices: np.ndarray, name: str | None = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.class_count,
            self.name if name is None else name,
        )

    def equals(self, other: "Dataset") -> bool:
        return (
            self.class_count == other.class_count
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True, eq=False)
class ClientShard:
    client_id: int
    source_dataset: str
    train: Dataset
    test: Dataset

    def __post_init__(self):
        if self.client_id < 0:
            raise ValueError("client_id must be non-negative")
        if self.train.class_count != self.test.class_count:
            raise ValueError("train and test class counts differ")
        if self.train.dim != self.test.dim:
            raise ValueError("train and test feature dimensions differ")


def generate_synthetic(
    seed: int,
    class_count: int,
    dim: int,
    per_class_counts: Sequence[int],
    spread: float,
    *,
    separation: float = 1.0,
    geometry_seed: int | None = None,
    heterogeneity: float = 1.0,
    name: str = "synthetic",
) -> Dataset:
    """Gaussian clusters, one per class, with standard deviation ``spread``.

    Class means are standard normal draws from ``seed`` scaled by
    ``separation``. With ``geometry_seed`` set, the means become a common
    component drawn from ``geometry_seed`` plus ``heterogeneity`` times the
    ``seed``-specific draw, so datasets built with one geometry seed share
    their class layout up to a dataset-specific offset.
    """
    counts = [int(c) for c in per_class_counts]
    if len(counts) != class_count:
        raise ValueError("per_class_counts must have class_count entries")
    if class_count < 2:
        raise ValueError("class_count must be at least 2")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if spread <= 0:
        raise ValueError("spread must be positive")
    if any(c <= 0 for c in counts):
        raise ValueError("every per-class count must be positive")

    means = np.random.default_rng(seed).standard_normal((class_count, dim))
    if geometry_seed is not None:
        common = np.random.default_rng(geometry_seed).standard_normal((class_count, dim))
        means = common + heterogeneity * means
    means *= separation
    rng = np.random.default_rng([seed, 1])
    labels = np.repeat(np.arange(class_count), counts)
    features = means[labels] + spread * rng.standard_normal((labels.shape[0], dim))
    order = rng.permutation(labels.shape[0])
    return Dataset(features[order], labels[order], class_count, name)


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path: str | Path, name: str | None = None) -> Dataset:
    """Read rows of ``d`` real features followed by an integer label.

    A first row containing any non-numeric field is treated as a header.
    Errors report 0-indexed physical line numbers.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh)) if row and any(f.strip() for f in row)]
    if rows and not all(_is_float(f) for f in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise CSVParseError("no data rows", 0)

    width = len(rows[0][1])
    if width < 2:
        raise CSVParseError("need at least one feature and a label", rows[0][0])
    features = np.empty((len(rows), width - 1))
    labels = np.empty(len(rows), dtype=np.int64)
    for r, (line, row) in enumerate(rows):
        if len(row) != width:
            raise CSVParseError(f"expected {width} fields, found {len(row)}", line)
        for c, token in enumerate(row[:-1]):
            try:
                features[r, c] = float(token)
            except ValueError:
                raise CSVParseError(f"non-numeric feature {token!r} in column {c}", line) from None
        label = row[-1].strip()
        if not _is_int(label):
            raise CSVParseError(f"label {label!r} is not an integer", line)
        labels[r] = int(label)
        if labels[r] < 0:
            raise CSVParseError(f"negative label {labels[r]}", line)
    if not np.all(np.isfinite(features)):
        bad = int(np.flatnonzero(~np.isfinite(features).all(axis=1))[0])
        raise CSVParseError("non-finite feature", rows[bad][0])
    class_count = int(labels.max()) + 1
    if class_count < 2:
        raise CSVParseError("labels must span at least two classes", rows[-1][0])
    return Dataset(features, labels, class_count, name or path.stem)


def split_indices(labels: np.ndarray, class_count: int, train_fraction: float, seed: int):
    """Stratified index split: floor(fraction * class size) of each class goes to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for c in range(class_count):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.shape[0])]
        cut = int(np.floor(train_fraction * members.shape[0]))
        train_parts.append(members[:cut])
        test_parts.append(members[cut:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    if train_idx.size == 0 or test_idx.size == 0:
        raise ValueError(
            f"train_fraction={train_fraction} leaves an empty side "
            f"({train_idx.size} train / {test_idx.size} test)"
        )
    return train_idx, test_idx


def split_train_test(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds.labels, ds.class_count, train_fraction, seed)
    return ds.subset(train_idx), ds.subset(test_idx)


def partition_clients(
    datasets: Sequence[Dataset],
    clients_per_dataset: int,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> list[ClientShard]:
    """Split each dataset 80/20 (by default) and deal its train split to its clients.

    Train rows are shuffled and assigned round-robin, so shard sizes differ by
    at most one. Every client of a dataset receives the same test split.
    Client ids run dataset-major.
    """
    if clients_per_dataset < 1:
        raise ValueError("clients_per_dataset must be at least 1")
    shards: list[ClientShard] = []
    for d, ds in enumerate(datasets):
        split_seed, deal_seed = np.random.SeedSequence([seed, d]).generate_state(2)
        train, test = split_train_test(ds, train_fraction, int(split_seed))
        if len(train) < clients_per_dataset:
            raise ValueError(
                f"dataset {ds.name!r}: {len(train)} train rows cannot feed "
                f"{clients_per_dataset} clients"
            )
        order = np.random.default_rng(int(deal_seed)).permutation(len(train))
        for j in range(clients_per_dataset):
            rows = np.sort(order[j::clients_per_dataset])
            shards.append(
                ClientShard(
                    client_id=len(shards),
                    source_dataset=ds.name,
                    train=train.subset(rows),
                    test=test,
                )
            )
    return shards


SYNTHETIC_PRESETS = tuple(CLASS_COUNTS)


def synthetic_preset(name: str, seed: int, dim: int, spread: float, **kwargs) -> Dataset:
    """Synthetic stand-in for one plant dataset: its class sizes, Gaussian features."""
    counts = CLASS_COUNTS[name]
    return generate_synthetic(seed, len(counts), dim, counts, spread, name=name, **kwargs)
