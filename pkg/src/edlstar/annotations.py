"""Multi-annotator label data model and dataset ingestion.

Every example carries the raw labels of its annotators.  From those we
derive the count vector, the soft label (relative frequencies) and the
majority outcome: MA when a single class attains the maximum count, NMA on
a tie for the maximum.  A plurality that is not an absolute majority
(4/9 votes, say) is still MA.

Dataset files are JSONL with a header line::

    {"num_classes": K, "feature_dim": D, "class_names": [...]}
    {"id": "u1", "features": [...], "labels": [0, 0, 2]}

or CSV with columns ``id,f0,...,f{D-1},labels`` where ``labels`` is a
``|``-separated list of class indices.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DatasetError",
    "ParseError",
    "DimensionMismatchError",
    "LabelRangeError",
    "AnnotationSet",
    "MajorityOutcome",
    "Example",
    "Dataset",
    "counts",
    "soft_label",
    "majority",
    "split_ma_nma",
    "select_nma_test",
    "relabel_with_extra_class",
    "load_dataset",
    "save_dataset",
]


class DatasetError(ValueError):
    """Base class for invalid annotation data."""


class ParseError(DatasetError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DimensionMismatchError(DatasetError):
    pass


class LabelRangeError(DatasetError):
    pass


@dataclass(frozen=True)
class AnnotationSet:
    """Labels from the ``M >= 1`` annotators of a single example."""

    labels: tuple[int, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if self.num_classes < 1:
            raise DatasetError(f"num_classes must be positive, got {self.num_classes}")
        if len(self.labels) < 1:
            raise DatasetError("an annotation set needs at least one label")
        for v in self.labels:
            if not 0 <= v < self.num_classes:
                raise LabelRangeError(f"label {v} outside [0, {self.num_classes})")

    @classmethod
    def from_counts(cls, count_vector: Sequence[int]) -> "AnnotationSet":
        labels = [k for k, c in enumerate(count_vector) for _ in range(int(c))]
        return cls(tuple(labels), len(count_vector))

    @property
    def num_annotators(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class MajorityOutcome:
    """``label`` is the majority class, or ``None`` for NMA (tied votes)."""

    label: int | None
    majority_fraction: float

    @property
    def is_ma(self) -> bool:
        return self.label is not None

    @property
    def is_nma(self) -> bool:
        return self.label is None


def counts(a: AnnotationSet) -> np.ndarray:
    return np.bincount(np.asarray(a.labels, dtype=np.int64), minlength=a.num_classes)


def soft_label(a: AnnotationSet) -> np.ndarray:
    return counts(a) / float(a.num_annotators)


def majority(a: AnnotationSet) -> MajorityOutcome:
    c = counts(a)
    top = c.max()
    winners = np.flatnonzero(c == top)
    fraction = float(top) / a.num_annotators
    if winners.size == 1:
        return MajorityOutcome(int(winners[0]), fraction)
    return MajorityOutcome(None, fraction)


@dataclass(frozen=True, eq=False)
class Example:
    id: str
    features: np.ndarray
    annotations: AnnotationSet

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise DimensionMismatchError(f"example {self.id!r}: features must be a vector")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @cached_property
    def majority(self) -> MajorityOutcome:
        return majority(self.annotations)


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered collection of examples sharing K classes and D features.

    Array views (``features``, ``counts``, ...) are computed once and cached.
    """

    examples: tuple[Example, ...]
    num_classes: int
    feature_dim: int
    class_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != self.num_classes:
                raise DatasetError(
                    f"{len(names)} class names given for {self.num_classes} classes"
                )
            object.__setattr__(self, "class_names", names)
        for ex in self.examples:
            if ex.features.shape[0] != self.feature_dim:
                raise DimensionMismatchError(
                    f"example {ex.id!r} has {ex.features.shape[0]} features, "
                    f"expected {self.feature_dim}"
                )
            if ex.annotations.num_classes != self.num_classes:
                raise DatasetError(
                    f"example {ex.id!r} has {ex.annotations.num_classes} classes, "
                    f"expected {self.num_classes}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def subset(self, examples: Iterable[Example]) -> "Dataset":
        return Dataset(tuple(examples), self.num_classes, self.feature_dim, self.class_names)

    @property
    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    @cached_property
    def features(self) -> np.ndarray:
        if not self.examples:
            return np.zeros((0, self.feature_dim))
        return np.stack([ex.features for ex in self.examples])

    @cached_property
    def counts(self) -> np.ndarray:
        if not self.examples:
            return np.zeros((0, self.num_classes), dtype=np.int64)
        return np.stack([counts(ex.annotations) for ex in self.examples])

    @cached_property
    def soft_labels(self) -> np.ndarray:
        c = self.counts
        return c / c.sum(axis=1, keepdims=True)

    @cached_property
    def majority_labels(self) -> np.ndarray:
        """Majority class per example, ``-1`` for NMA."""
        return np.array(
            [-1 if ex.majority.label is None else ex.majority.label for ex in self.examples],
            dtype=np.int64,
        )

    @property
    def is_nma(self) -> np.ndarray:
        return self.majority_labels < 0


def split_ma_nma(d: Dataset) -> tuple[Dataset, Dataset]:
    """Partition ``d`` into (MA, NMA) subsets, preserving order."""
    ma = [ex for ex in d if ex.majority.is_ma]
    nma = [ex for ex in d if ex.majority.is_nma]
    return d.subset(ma), d.subset(nma)


def select_nma_test(n: int, seed: int, test_fraction: float = 0.25) -> np.ndarray:
    """Boolean mask choosing ``round(test_fraction * n)`` items by seeded shuffle."""
    n_test = int(math.floor(test_fraction * n + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[order[:n_test]] = True
    return mask


def relabel_with_extra_class(
    d: Dataset, seed: int, test_fraction: float = 0.25
) -> tuple[Dataset, Dataset]:
    """Build the training set for a classifier with NMA as an extra class.

    MA examples keep their majority label as a single annotation; NMA
    examples get the single label ``K``.  A seeded ``test_fraction`` of the
    NMA examples is held out instead of being relabelled.

    Returns:
        ``(train, nma_test)``: ``train`` has ``K + 1`` classes; ``nma_test``
        holds the held-out NMA examples with their original annotations.
    """
    ma, nma = split_ma_nma(d)
    held = select_nma_test(len(nma), seed, test_fraction)
    extra = d.num_classes
    names = None if d.class_names is None else d.class_names + ("NMA",)

    relabelled = [
        Example(ex.id, ex.features, AnnotationSet((ex.majority.label,), extra + 1)) for ex in ma
    ]
    for ex, is_test in zip(nma, held):
        if not is_test:
            relabelled.append(Example(ex.id, ex.features, AnnotationSet((extra,), extra + 1)))
    train = Dataset(tuple(relabelled), extra + 1, d.feature_dim, names)
    test = nma.subset(ex for ex, is_test in zip(nma, held) if is_test)
    return train, test


# -- file formats ------------------------------------------------------------


def _check_labels(labels, k: int, line: int) -> tuple[int, ...]:
    if not isinstance(labels, (list, tuple)) or not labels:
        raise ParseError("'labels' must be a non-empty list", line)
    out = []
    for v in labels:
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            raise ParseError(f"label {v!r} is not an integer", line)
        if not 0 <= v < k:
            raise LabelRangeError(f"line {line}: label {v} outside [0, {k})")
        out.append(int(v))
    return tuple(out)


def _check_features(feats, dim: int, line: int) -> np.ndarray:
    if not isinstance(feats, (list, tuple)):
        raise ParseError("'features' must be a list", line)
    if len(feats) != dim:
        raise DimensionMismatchError(f"line {line}: {len(feats)} features, expected {dim}")
    try:
        arr = np.asarray(feats, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"non-numeric feature ({exc})", line) from None
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite feature value", line)
    return arr


def _load_jsonl(path: Path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON header ({exc.msg})", 1) from None
    try:
        k = int(header["num_classes"])
        dim = int(header["feature_dim"])
    except (KeyError, TypeError, ValueError):
        raise ParseError("header needs integer 'num_classes' and 'feature_dim'", 1) from None
    names = header.get("class_names")

    examples = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict) or not {"id", "features", "labels"} <= rec.keys():
            raise ParseError("record needs 'id', 'features' and 'labels'", lineno)
        feats = _check_features(rec["features"], dim, lineno)
        labels = _check_labels(rec["labels"], k, lineno)
        examples.append(Example(str(rec["id"]), feats, AnnotationSet(labels, k)))
    return Dataset(tuple(examples), k, dim, names)


def _load_csv(path: Path, num_classes: int | None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", 1)
    header = rows[0]
    if len(header) < 2 or header[0] != "id" or header[-1] != "labels":
        raise ParseError("header must be id,f0..f{D-1},labels", 1)
    dim = len(header) - 2
    if header[1:-1] != [f"f{j}" for j in range(dim)]:
        raise ParseError("feature columns must be named f0..f{D-1}", 1)

    parsed = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 2:
            raise DimensionMismatchError(
                f"line {lineno}: {len(row) - 2} features, expected {dim}"
            )
        try:
            feats = [float(v) for v in row[1:-1]]
            labels = [int(v) for v in row[-1].split("|")]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        parsed.append((lineno, row[0], feats, labels))

    # Without an explicit K the largest observed label decides it.
    k = num_classes
    if k is None:
        k = 1 + max((max(labels) for _, _, _, labels in parsed), default=0)
    examples = []
    for lineno, ident, feats, labels in parsed:
        arr = _check_features(feats, dim, lineno)
        examples.append(Example(ident, arr, AnnotationSet(_check_labels(labels, k, lineno), k)))
    return Dataset(tuple(examples), k, dim)


def load_dataset(path, format: str | None = None, num_classes: int | None = None) -> Dataset:
    """Read a dataset file.

    Args:
        path: file to read.
        format: ``"jsonl"`` or ``"csv"``; inferred from the suffix when omitted.
        num_classes: K for CSV files, which carry no header metadata.

    Raises:
        ParseError: malformed content, with the offending line number.
        DimensionMismatchError: a feature vector of the wrong length.
        LabelRangeError: a label index outside ``[0, K)``.
    """
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt == "jsonl":
        return _load_jsonl(path)
    if fmt == "csv":
        return _load_csv(path, num_classes)
    raise ValueError(f"unknown dataset format {fmt!r}")


def save_dataset(d: Dataset, path, format: str = "jsonl") -> None:
    path = Path(path)
    if format == "jsonl":
        header = {"num_classes": d.num_classes, "feature_dim": d.feature_dim}
        header["class_names"] = list(d.class_names or [f"class{k}" for k in range(d.num_classes)])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for ex in d:
                rec = {
                    "id": ex.id,
                    "features": [float(v) for v in ex.features],
                    "labels": list(ex.annotations.labels),
                }
                fh.write(json.dumps(rec) + "\n")
    elif format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", *[f"f{j}" for j in range(d.feature_dim)], "labels"])
            for ex in d:
                w.writerow(
                    [ex.id, *[repr(float(v)) for v in ex.features],
                     "|".join(str(v) for v in ex.annotations.labels)]
                )
    else:
        raise ValueError(f"unknown dataset format {format!r}")
