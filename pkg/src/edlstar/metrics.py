"""Evaluation metrics.

Classification (ACC, UAR, confusion matrix), calibration (ECE, MCE over
equal-width confidence bins), detection of tied-vote examples (AUROC,
AUPRC with NMA as the positive class and uncertainty as the score),
distribution estimation (per-annotation multinomial NLL), reject-option
curves and ECDFs.

Conventions:
    * argmax ties resolve to the lowest class index;
    * bin ``q`` of ``Q`` covers ``(q/Q, (q+1)/Q]``, with confidence 0 in the
      first bin;
    * AUROC is the Mann-Whitney statistic with ties counted one half;
    * AUPRC is step-wise average precision over distinct score thresholds;
    * the multinomial coefficient is left out of the NLL and each example
      is normalised by its number of annotations.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "EvalRecord",
    "RecordArrays",
    "records_to_arrays",
    "argmax_lowest",
    "accuracy",
    "uar",
    "UarResult",
    "calibration_bins",
    "ece",
    "mce",
    "auroc",
    "auprc",
    "per_example_nll",
    "multinomial_nll",
    "RejectCurve",
    "reject_curve",
    "ecdf",
    "confusion_matrix",
    "MetricsReport",
    "REPORT_SCHEMA_VERSION",
    "NLL_FLOOR",
]

NLL_FLOOR = 1e-12
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class EvalRecord:
    """Per-example evaluation inputs.

    ``confidence`` is the maximum predicted probability; ``uncertainty`` is
    ``K / alpha0`` for evidential models and ``1 - confidence`` otherwise.
    """

    id: str
    true_majority: int | None
    counts: np.ndarray
    probs: np.ndarray
    confidence: float
    uncertainty: float

    @property
    def is_nma(self) -> bool:
        return self.true_majority is None


@dataclass(frozen=True, eq=False)
class RecordArrays:
    labels: np.ndarray  # -1 for NMA
    counts: np.ndarray
    probs: np.ndarray
    confidence: np.ndarray
    uncertainty: np.ndarray

    @property
    def is_nma(self) -> np.ndarray:
        return self.labels < 0


def records_to_arrays(records: Sequence[EvalRecord]) -> RecordArrays:
    if not records:
        raise ValueError("no records")
    return RecordArrays(
        labels=np.array([-1 if r.true_majority is None else r.true_majority for r in records]),
        counts=np.stack([np.asarray(r.counts, dtype=np.float64) for r in records]),
        probs=np.stack([np.asarray(r.probs, dtype=np.float64) for r in records]),
        confidence=np.array([r.confidence for r in records], dtype=np.float64),
        uncertainty=np.array([r.uncertainty for r in records], dtype=np.float64),
    )


def argmax_lowest(probs) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(np.asarray(probs), axis=-1)


def _nonempty(x, name):
    arr = np.asarray(x)
    if arr.shape[0] == 0:
        raise ValueError(f"{name}: empty input")
    return arr


def accuracy(probs, labels) -> float:
    probs = _nonempty(probs, "accuracy")
    labels = np.asarray(labels)
    if np.any(labels < 0):
        raise ValueError("accuracy: every record needs a majority label")
    return float(np.mean(argmax_lowest(probs) == labels))


@dataclass(frozen=True)
class UarResult:
    value: float
    absent_classes: tuple[int, ...] = ()


def uar(probs, labels, num_classes: int | None = None) -> UarResult:
    """Unweighted average recall over the classes present in ``labels``.

    Classes absent from the ground truth are left out of the mean and listed
    in ``absent_classes``; a ``RuntimeWarning`` is emitted when that happens.
    """
    probs = _nonempty(probs, "uar")
    labels = np.asarray(labels)
    k = num_classes if num_classes is not None else probs.shape[1]
    pred = argmax_lowest(probs)
    recalls, absent = [], []
    for c in range(k):
        sel = labels == c
        if not sel.any():
            absent.append(c)
            continue
        recalls.append(np.mean(pred[sel] == c))
    if absent:
        warnings.warn(f"uar: classes {absent} absent from ground truth", RuntimeWarning)
    if not recalls:
        raise ValueError("uar: no class present in ground truth")
    return UarResult(float(np.mean(recalls)), tuple(absent))


def calibration_bins(confidence, correct, n_bins: int = 10):
    """Per-bin ``(lower_edge, upper_edge, count, accuracy, mean_confidence)``.

    Empty bins report ``count == 0`` and NaN accuracy/confidence.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    conf = np.asarray(confidence, dtype=np.float64)
    corr = np.asarray(correct, dtype=np.float64)
    if np.any(conf < 0) or np.any(conf > 1):
        raise ValueError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=corr, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = acc_sum / count
        mean_conf = conf_sum / count
    return edges[:-1], edges[1:], count, acc, mean_conf


def ece(confidence, correct, n_bins: int = 10) -> float:
    _, _, count, acc, conf = calibration_bins(confidence, correct, n_bins)
    n = count.sum()
    if n == 0:
        raise ValueError("ece: empty input")
    used = count > 0
    return float(np.sum(count[used] / n * np.abs(acc[used] - conf[used])))


def mce(confidence, correct, n_bins: int = 10) -> float:
    _, _, count, acc, conf = calibration_bins(confidence, correct, n_bins)
    used = count > 0
    if not used.any():
        raise ValueError("mce: empty input")
    return float(np.max(np.abs(acc[used] - conf[used])))


def _binary(scores, positive, name):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positive, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"{name}: scores and labels must be matching vectors")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise ValueError(f"{name}: both positive and negative examples are required")
    return s, y, n_pos


def auroc(scores, positive) -> float:
    """Probability that a random positive outscores a random negative."""
    s, y, n_pos = _binary(scores, positive, "auroc")
    n_neg = y.size - n_pos
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, positive) -> float:
    """Average precision: sum over thresholds of precision times recall gain."""
    s, y, n_pos = _binary(scores, positive, "auprc")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last position of each group of tied scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(precision * recall_gain))


def per_example_nll(probs, counts) -> np.ndarray:
    p = np.maximum(np.asarray(probs, dtype=np.float64), NLL_FLOOR)
    c = np.asarray(counts, dtype=np.float64)
    if p.shape != c.shape:
        raise ValueError(f"probs {p.shape} and counts {c.shape} differ in shape")
    return -np.sum(c * np.log(p), axis=-1) / c.sum(axis=-1)


def multinomial_nll(probs, counts) -> float:
    """Mean per-annotation negative log-likelihood of the observed labels."""
    _nonempty(probs, "multinomial_nll")
    return float(np.mean(per_example_nll(probs, counts)))


@dataclass(frozen=True)
class RejectCurve:
    """Metric over the examples whose uncertainty is at most each threshold.

    ``values[i]`` is ``None`` when no example survives threshold ``i``.
    """

    thresholds: tuple[float, ...]
    values: tuple[float | None, ...]
    retained: tuple[int, ...]

    def as_rows(self):
        return [
            {"threshold": t, "value": v, "retained": r, "empty": r == 0}
            for t, v, r in zip(self.thresholds, self.values, self.retained)
        ]


def reject_curve(uncertainty, per_example, thresholds) -> RejectCurve:
    """Reject-option curve for any per-example quantity averaged over kept items.

    ``per_example`` is correctness (0/1) for accuracy or per-example NLL.
    """
    u = _nonempty(uncertainty, "reject_curve").astype(np.float64)
    v = np.asarray(per_example, dtype=np.float64)
    ts = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(ts) < 0):
        raise ValueError("thresholds must be sorted ascending")
    values, retained = [], []
    for t in ts:
        keep = u <= t
        k = int(keep.sum())
        retained.append(k)
        values.append(float(v[keep].mean()) if k else None)
    return RejectCurve(tuple(float(t) for t in ts), tuple(values), tuple(retained))


def ecdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted sample and cumulative fractions ``i/n``."""
    x = np.sort(_nonempty(values, "ecdf").astype(np.float64))
    return x, np.arange(1, x.size + 1) / x.size


def confusion_matrix(labels, predictions, num_classes: int) -> np.ndarray:
    """Counts with true classes on rows and predicted classes on columns."""
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(predictions, dtype=np.int64)
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (y, p), 1)
    return out


# -- report -------------------------------------------------------------------


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


@dataclass
class MetricsReport:
    """Scalar metrics, curve series and confusion counts of one evaluation.

    Detection metrics against all NMA examples are ``None`` for models that
    saw part of the NMA data in training.
    """

    scalars: dict
    curves: dict = field(default_factory=dict)
    confusion: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    SCALAR_KEYS = (
        "acc",
        "uar",
        "ece",
        "mce",
        "auroc_all",
        "auprc_all",
        "auroc_test",
        "auprc_test",
        "nll_ma",
        "nll_nma",
    )

    def to_dict(self) -> dict:
        return _clean(
            {
                "schema_version": REPORT_SCHEMA_VERSION,
                "meta": self.meta,
                "scalars": {**{k: None for k in self.SCALAR_KEYS}, **self.scalars},
                "confusion": self.confusion,
                "curves": self.curves,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {doc.get('schema_version')!r}")
        return cls(doc["scalars"], doc.get("curves", {}), doc.get("confusion", []), doc.get("meta", {}))

    def write(self, out_dir) -> None:
        """``report.json`` plus one CSV per curve under ``curves/``."""
        out = Path(out_dir)
        (out / "curves").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n", encoding="utf-8")
        for name, rows in sorted(self.curves.items()):
            if not rows:
                continue
            with open(out / "curves" / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
                w.writeheader()
                for row in rows:
                    w.writerow({k: ("" if v is None else v) for k, v in _clean(row).items()})
