"""Long-tailed datasets: representation, synthetic generation, head/tail split, file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DatasetError(ValueError):
    """Dataset contents or generation parameters violate an invariant."""


class DatasetParseError(DatasetError):
    def __init__(self, path, line_no: int, msg: str):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.line_no = line_no


class DegeneratePartitionError(DatasetError):
    """Head/tail rule put every class on one side."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class LongTailDataset:
    """Labeled feature vectors with per-class bookkeeping.

    ``features`` is ``[N, d]`` and ``labels`` is ``[N]``; both are made
    read-only on construction. Classes may be empty (count 0) when loaded
    from a file, and ``n_min`` is taken over non-empty classes.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    per_class_index: tuple[np.ndarray, ...] = field(init=False, repr=False)
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DatasetError(f"features must be [N, d], got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise DatasetError(f"{labels.shape[0]} labels for {feats.shape[0]} examples")
        if self.num_classes < 1:
            raise DatasetError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError(f"label out of range [0, {self.num_classes})")
        feats.setflags(write=False)
        labels.setflags(write=False)
        index = []
        for c in range(self.num_classes):
            ids = np.flatnonzero(labels == c)
            ids.setflags(write=False)
            index.append(ids)
        counts = np.array([len(ids) for ids in index], dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "per_class_index", tuple(index))
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i: int) -> LabeledExample:
        return LabeledExample(self.features[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[LabeledExample]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LongTailDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )

    @property
    def examples(self) -> list[LabeledExample]:
        return list(self)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_max(self) -> int:
        return int(self.counts.max())

    @property
    def n_min(self) -> int:
        nonempty = self.counts[self.counts > 0]
        if nonempty.size == 0:
            raise DatasetError("dataset has no examples")
        return int(nonempty.min())

    @property
    def imbalance_factor(self) -> float:
        return self.n_max / self.n_min

    def histogram(self, width: int = 40) -> str:
        """Text bar chart of per-class counts."""
        top = max(self.n_max, 1)
        lines = []
        for c, n in enumerate(self.counts):
            bar = "#" * max(1 if n else 0, round(width * n / top))
            lines.append(f"{c:>4} {n:>6} {bar}")
        return "\n".join(lines)


# --- synthetic generation -------------------------------------------------

def longtail_counts(num_classes: int, n_max: int, imbalance_factor: float) -> list[int]:
    """Exponentially decaying class sizes ``n_max * mu**(i/(C-1))``, ``mu = 1/factor``."""
    if num_classes < 1:
        raise DatasetError("num_classes must be >= 1")
    if imbalance_factor < 1:
        raise DatasetError(f"imbalance_factor must be >= 1, got {imbalance_factor}")
    if num_classes == 1:
        return [int(n_max)]
    mu = 1.0 / imbalance_factor
    counts = [round_half_up(n_max * mu ** (i / (num_classes - 1))) for i in range(num_classes)]
    if min(counts) < 1:
        raise DatasetError(
            f"n_max={n_max} with imbalance_factor={imbalance_factor} gives an empty class; need n_max >= factor"
        )
    return counts


def class_means(num_classes: int, feature_dim: int, separation: float, seed: int) -> np.ndarray:
    """Cluster centres at random unit directions scaled by ``separation``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    dirs = rng.standard_normal((num_classes, feature_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return separation * dirs


def _sample_clusters(means: np.ndarray, counts: Sequence[int], rng: np.random.Generator) -> LongTailDataset:
    feats, labels = [], []
    for c, n in enumerate(counts):
        feats.append(means[c] + rng.standard_normal((n, means.shape[1])))
        labels.append(np.full(n, c, dtype=np.int64))
    return LongTailDataset(np.concatenate(feats), np.concatenate(labels), len(counts))


def generate_synthetic(
    num_classes: int,
    n_max: int,
    imbalance_factor: float,
    feature_dim: int,
    seed: int,
    separation: float = 3.0,
) -> LongTailDataset:
    """Gaussian-cluster training set with exponentially decaying class sizes."""
    if num_classes < 2:
        raise DatasetError("num_classes must be >= 2")
    if n_max < imbalance_factor:
        raise DatasetError(f"n_max ({n_max}) must be >= imbalance_factor ({imbalance_factor})")
    if feature_dim < 1:
        raise DatasetError("feature_dim must be >= 1")
    counts = longtail_counts(num_classes, n_max, imbalance_factor)
    means = class_means(num_classes, feature_dim, separation, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return _sample_clusters(means, counts, rng)


def generate_balanced(
    num_classes: int, per_class: int, feature_dim: int, seed: int, separation: float = 3.0
) -> LongTailDataset:
    """Class-balanced set drawn from the same clusters as ``generate_synthetic(seed=seed)``."""
    if per_class < 1:
        raise DatasetError("per_class must be >= 1")
    means = class_means(num_classes, feature_dim, separation, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    return _sample_clusters(means, [per_class] * num_classes, rng)


# --- head / tail ----------------------------------------------------------

@dataclass(frozen=True)
class CountThreshold:
    k: int

    def __str__(self) -> str:
        return f"count_threshold({self.k})"


@dataclass(frozen=True)
class MedianSplit:
    def __str__(self) -> str:
        return "median_split"


PartitionRule = CountThreshold | MedianSplit


def parse_rule(name: str, k: int | None = None) -> PartitionRule:
    if name == "count_threshold":
        if k is None:
            raise DatasetError("count_threshold needs k")
        return CountThreshold(int(k))
    if name == "median_split":
        return MedianSplit()
    raise DatasetError(f"unknown head/tail rule {name!r}")


@dataclass(frozen=True)
class HeadTailPartition:
    head: frozenset[int]
    tail: frozenset[int]
    rule: str

    def side(self, c: int) -> str:
        return "head" if c in self.head else "tail"

    def opposite(self, c: int) -> frozenset[int]:
        return self.tail if c in self.head else self.head


def partition_head_tail(ds: LongTailDataset, rule: PartitionRule) -> HeadTailPartition:
    """Split classes by training count.

    ``CountThreshold(k)``: head iff count >= k. ``MedianSplit``: head iff
    count is strictly above the median count.
    """
    if len(ds) == 0:
        raise DatasetError("cannot partition an empty dataset")
    counts = ds.counts
    if isinstance(rule, CountThreshold):
        is_head = counts >= rule.k
    elif isinstance(rule, MedianSplit):
        is_head = counts > np.median(counts)
    else:
        raise DatasetError(f"unknown head/tail rule {rule!r}")
    head = frozenset(int(c) for c in np.flatnonzero(is_head))
    tail = frozenset(range(ds.num_classes)) - head
    if not head or not tail:
        side = "head" if head else "tail"
        raise DegeneratePartitionError(f"{rule} puts all {ds.num_classes} classes in {side}")
    return HeadTailPartition(head, tail, str(rule))


# --- file format ----------------------------------------------------------

MAGIC = "ltds"
VERSION = "v1"


def save_dataset(ds: LongTailDataset, path) -> None:
    """Write the ``ltds v1`` text format (floats via ``repr`` for lossless round-trips)."""
    lines = [f"{MAGIC} {VERSION} {ds.num_classes} {ds.feature_dim} {len(ds)}"]
    for row, y in zip(ds.features, ds.labels):
        lines.append(" ".join([str(int(y))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_dataset(path, format: str = "ltds") -> LongTailDataset:  # noqa: A002
    if format != "ltds":
        raise DatasetError(f"unsupported dataset format {format!r}")
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetParseError(path, 1, "empty file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != MAGIC or head[1] != VERSION:
        raise DatasetParseError(path, 1, f"expected header '{MAGIC} {VERSION} <C> <dim> <N>', got {lines[0]!r}")
    try:
        C, d, n = (int(v) for v in head[2:])
    except ValueError:
        raise DatasetParseError(path, 1, "header counts must be integers") from None
    if C < 1 or d < 1 or n < 0:
        raise DatasetParseError(path, 1, "header counts out of range")
    body = lines[1:]
    if len(body) < n:
        raise DatasetParseError(path, len(lines) + 1, f"truncated: header promises {n} examples, found {len(body)}")
    if len(body) > n:
        raise DatasetParseError(path, n + 2, f"trailing data after {n} examples")

    feats = np.empty((n, d), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    for i, line in enumerate(body):
        line_no = i + 2
        parts = line.split()
        if len(parts) != d + 1:
            raise DatasetParseError(path, line_no, f"expected label plus {d} features, got {len(parts)} fields")
        try:
            y = int(parts[0])
            feats[i] = [float(v) for v in parts[1:]]
        except ValueError as e:
            raise DatasetParseError(path, line_no, str(e)) from None
        if not 0 <= y < C:
            raise DatasetParseError(path, line_no, f"label {y} out of range [0, {C})")
        labels[i] = y
    return LongTailDataset(feats, labels, C)
