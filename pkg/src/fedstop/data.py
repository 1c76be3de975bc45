"""Synthetic datasets, non-IID client partitioners and stratified splits.

Three partitioners are provided, each driven by a single coefficient ``c``:

* :func:`partition_dirichlet` - label skew, per-class client proportions
  drawn from ``Dir(c)``; small ``c`` means strong skew.
* :func:`partition_pathological` - label skew, every client holds shards
  of exactly ``c`` classes.
* :func:`partition_quantity` - client sizes drawn from ``Dir(c)``, labels
  left close to IID.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .model import Batch

__all__ = [
    "Dataset",
    "PartitionSpec",
    "Partition",
    "generate_synthetic",
    "partition_dirichlet",
    "partition_pathological",
    "partition_quantity",
    "make_partition",
    "split",
    "label_distribution",
    "tv_distance",
    "save_csv",
    "load_csv",
]

SKEWS = ("dirichlet", "pathological", "quantity")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def batch(self, idx=None) -> Batch:
        if idx is None:
            return Batch(self.features, self.labels)
        return Batch(self.features[idx], self.labels[idx])

    def equals(self, other: "Dataset") -> bool:
        return (self.num_classes == other.num_classes
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class PartitionSpec:
    skew: str
    c: float
    num_clients: int
    seed: int = 0

    def __post_init__(self):
        if self.skew not in SKEWS:
            raise ConfigError(f"unknown skew {self.skew!r}; expected one of {SKEWS}")
        if self.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if not self.c > 0:
            raise ConfigError("partition coefficient c must be positive")
        if self.skew == "pathological" and int(self.c) != self.c:
            raise ConfigError("pathological c is a number of classes per client")


@dataclass(frozen=True, eq=False)
class Partition:
    client_indices: list[np.ndarray]

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)

    def sizes(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.client_indices])

    def equals(self, other: "Partition") -> bool:
        return (self.num_clients == other.num_clients
                and all(np.array_equal(a, b) for a, b in zip(self.client_indices, other.client_indices)))


def generate_synthetic(num_classes: int, input_dim: int, n_per_class: int,
                       class_sep: float, seed) -> Dataset:
    """Gaussian blobs with unit covariance, one per class.

    Class ``k`` is centred at ``class_sep * u_k``. The directions ``u_k`` are
    orthonormal when ``num_classes <= input_dim`` and random unit vectors
    otherwise. Samples are ordered by class.
    """
    if num_classes < 2:
        raise ConfigError("num_classes must be >= 2")
    if n_per_class < 1 or input_dim < 1:
        raise ConfigError("n_per_class and input_dim must be positive")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((input_dim, num_classes))
    if num_classes <= input_dim:
        Q, _ = np.linalg.qr(G)
        dirs = Q.T
    else:
        dirs = (G / np.linalg.norm(G, axis=0)).T
    means = class_sep * dirs
    X = np.concatenate([means[k] + rng.standard_normal((n_per_class, input_dim))
                        for k in range(num_classes)])
    y = np.repeat(np.arange(num_classes), n_per_class)
    return Dataset(X, y, num_classes)


def label_distribution(labels: np.ndarray, num_classes: int) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=np.intp), minlength=num_classes)
    return counts / max(counts.sum(), 1)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _repair_empty(parts: list[list[int]]) -> None:
    # move one sample from the currently largest client into each empty one
    for i, part in enumerate(parts):
        if not part:
            donor = max(range(len(parts)), key=lambda j: len(parts[j]))
            if len(parts[donor]) < 2:
                raise ConfigError("not enough samples to give every client one")
            part.append(parts[donor].pop())


def _finish(parts: list[list[int]]) -> Partition:
    return Partition([np.sort(np.asarray(p, dtype=np.intp)) for p in parts])


def partition_dirichlet(ds: Dataset, c: float, N: int, seed) -> Partition:
    if not c > 0:
        raise ConfigError("dirichlet c must be positive")
    if N < 1:
        raise ConfigError("N must be >= 1")
    if N > len(ds):
        raise ConfigError("more clients than samples")
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[] for _ in range(N)]
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == k)
        rng.shuffle(idx)
        p = rng.dirichlet(np.full(N, float(c)))
        cuts = (np.cumsum(p)[:-1] * len(idx)).astype(int)
        for client, chunk in enumerate(np.split(idx, cuts)):
            parts[client].extend(chunk.tolist())
    _repair_empty(parts)
    return _finish(parts)


def partition_pathological(ds: Dataset, c: int, N: int, seed,
                           shards_per_slot: int = 2) -> Partition:
    """Every client gets shards from exactly ``c`` distinct classes.

    Client ``i`` owns class slots ``perm[(i*c + j) % K]`` for ``j < c`` where
    ``perm`` is a seeded shuffle of the classes, so slots are dealt
    round-robin and each class is shared by ``floor`` or ``ceil`` of
    ``N*c/K`` clients. A class's samples are cut into
    ``shards_per_slot`` shards per owning slot.
    """
    K = ds.num_classes
    if int(c) != c or not 1 <= c <= K:
        raise ConfigError(f"pathological c must be an integer in [1, {K}]")
    c = int(c)
    if N < 1:
        raise ConfigError("N must be >= 1")
    if N * c < K:
        raise ConfigError(f"N*c = {N * c} slots cannot cover {K} classes")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(K)
    owners: dict[int, list[int]] = {k: [] for k in range(K)}
    for i in range(N):
        for j in range(c):
            owners[int(perm[(i * c + j) % K])].append(i)

    parts: list[list[int]] = [[] for _ in range(N)]
    for k in range(K):
        idx = np.flatnonzero(ds.labels == k)
        rng.shuffle(idx)
        n_shards = len(owners[k]) * shards_per_slot
        size = len(idx) // n_shards
        if size < 1:
            raise ConfigError(f"class {k} has {len(idx)} samples for {n_shards} shards")
        shards = [idx[s * size:(s + 1) * size] for s in range(n_shards)]
        shards[-1] = idx[(n_shards - 1) * size:]  # remainder goes to the last shard
        order = rng.permutation(n_shards)
        for slot, client in enumerate(owners[k]):
            for s in order[slot * shards_per_slot:(slot + 1) * shards_per_slot]:
                parts[client].extend(shards[s].tolist())
    return _finish(parts)


def _quantity_sizes(p: np.ndarray, n_total: int) -> np.ndarray:
    raw = p * n_total
    sizes = np.floor(raw).astype(int)
    short = n_total - sizes.sum()
    # largest remainders first, index order breaks ties
    order = np.lexsort((np.arange(len(p)), -(raw - sizes)))
    sizes[order[:short]] += 1
    for i in np.flatnonzero(sizes < 1):
        sizes[np.argmax(sizes)] -= 1
        sizes[i] = 1
    return sizes


def partition_quantity(ds: Dataset, c: float, N: int, seed) -> Partition:
    if not c > 0:
        raise ConfigError("quantity c must be positive")
    if N < 1 or N > len(ds):
        raise ConfigError("N must be in [1, number of samples]")
    rng = np.random.default_rng(seed)
    sizes = _quantity_sizes(rng.dirichlet(np.full(N, float(c))), len(ds))
    idx = rng.permutation(len(ds))
    bounds = np.cumsum(sizes)[:-1]
    return _finish([chunk.tolist() for chunk in np.split(idx, bounds)])


def make_partition(ds: Dataset, spec: PartitionSpec) -> Partition:
    if spec.skew == "dirichlet":
        return partition_dirichlet(ds, spec.c, spec.num_clients, spec.seed)
    if spec.skew == "pathological":
        return partition_pathological(ds, int(spec.c), spec.num_clients, spec.seed)
    return partition_quantity(ds, spec.c, spec.num_clients, spec.seed)


def split(ds: Dataset, fractions: Sequence[float], seed) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified, disjoint, exhaustive train/val/test split.

    Per class, counts are apportioned by largest remainder so that they sum
    to the class size exactly.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ConfigError("fractions must be three positive numbers summing to 1")
    rng = np.random.default_rng(seed)
    out: list[list[int]] = [[], [], []]
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == k)
        rng.shuffle(idx)
        raw = fr * len(idx)
        counts = np.floor(raw).astype(int)
        short = len(idx) - counts.sum()
        counts[np.lexsort((np.arange(3), -(raw - counts)))[:short]] += 1
        if np.any(counts == 0):
            raise ConfigError(f"class {k} ({len(idx)} samples) cannot populate every split")
        for part, chunk in zip(out, np.split(idx, np.cumsum(counts)[:-1])):
            part.extend(chunk.tolist())
    return tuple(ds.subset(np.sort(np.asarray(p, dtype=np.intp))) for p in out)


def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"feature_{j}" for j in range(ds.input_dim)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def load_csv(path, num_classes: int | None = None) -> Dataset:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[-1] != "label":
        raise ConfigError("dataset CSV must end with a 'label' column")
    X = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64).reshape(len(body), len(header) - 1)
    y = np.array([int(r[-1]) for r in body], dtype=np.intp)
    k = num_classes if num_classes is not None else int(y.max()) + 1
    return Dataset(X, y, k)
