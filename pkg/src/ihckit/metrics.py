"""Evaluation computations: accuracy, bootstrap CIs, confusion matrices,
ordinal within-one-rank reports, calibration (ECE), and paired tests.

All functions are pure and operate on integer class indices /
probability arrays; nothing here touches the model.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .exceptions import (
    DegenerateInput,
    EmptyInput,
    IndexOutOfRange,
    LengthMismatch,
    NonOrdinalTask,
)
from .vocab import TaskId, VocabularyRegistry, default_registry

ECE_BINS = 10


def _as_index_arrays(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise LengthMismatch(f"preds shape {p.shape} != labels shape {y.shape}")
    if p.size == 0:
        raise EmptyInput("no samples")
    return p.astype(np.int64), y.astype(np.int64)


def accuracy(preds, labels) -> float:
    """Fraction of exact matches."""
    p, y = _as_index_arrays(preds, labels)
    return float(np.mean(p == y))


def bootstrap_ci(
    metric: Callable[[np.ndarray, np.ndarray], float],
    preds,
    labels,
    replicates: int = 1000,
    seed: int = 0,
    coverage: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval for ``metric(preds, labels)``.

    Each replicate resamples indices with replacement from a single
    ``default_rng(seed)`` stream, so intervals at nested coverages over
    the same seed are themselves nested.
    """
    p, y = _as_index_arrays(preds, labels)
    if p.size < 2:
        raise EmptyInput("bootstrap needs at least 2 samples")
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must be in (0, 1)")
    rng = np.random.default_rng(seed)
    values = np.empty(replicates, dtype=np.float64)
    for r in range(replicates):
        idx = rng.integers(0, p.size, size=p.size)
        values[r] = metric(p[idx], y[idx])
    tail = 100.0 * (1.0 - coverage) / 2.0
    lo, hi = np.percentile(values, [tail, 100.0 - tail])
    return float(lo), float(hi)


def confusion_matrix(preds, labels, num_classes: int) -> np.ndarray:
    """``(k, k)`` counts; entry ``(i, j)`` = labels ``i`` predicted as ``j``."""
    p, y = _as_index_arrays(preds, labels)
    if (p < 0).any() or (p >= num_classes).any() or (y < 0).any() or (y >= num_classes).any():
        raise IndexOutOfRange(f"class index outside [0, {num_classes})")
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (y, p), 1)
    return out


@dataclass(frozen=True)
class OrdinalReport:
    """Within-/beyond-one-rank split for an ordinal task."""

    task: TaskId
    total: int
    within_count: int
    within_one_rank: float
    beyond_one_rank: float

    def __post_init__(self):
        if self.within_one_rank + self.beyond_one_rank != 1.0:
            raise ValueError("within_one_rank and beyond_one_rank must sum to exactly 1.0")


def ordinal_report(
    preds, labels, task: TaskId, registry: Optional[VocabularyRegistry] = None
) -> OrdinalReport:
    """Mean of ``|rank(pred) - rank(label)| <= 1`` for an ordinal task.

    ``beyond_one_rank`` is defined as ``1.0 - within_one_rank``, so the
    complement identity holds exactly in float arithmetic.
    """
    registry = registry or default_registry()
    vocab = registry[task]
    if not vocab.ordinal:
        raise NonOrdinalTask(f"{task.value} has no rank order")
    p, y = _as_index_arrays(preds, labels)
    k = len(vocab.classes)
    if (p < 0).any() or (p >= k).any() or (y < 0).any() or (y >= k).any():
        raise IndexOutOfRange(f"class index outside [0, {k})")
    within_count = int(np.sum(np.abs(p - y) <= 1))
    within = within_count / p.size
    return OrdinalReport(
        task=task,
        total=int(p.size),
        within_count=within_count,
        within_one_rank=within,
        beyond_one_rank=1.0 - within,
    )


@dataclass(frozen=True)
class CalibrationBin:
    count: int
    mean_confidence: float  # 0.0 for empty bins
    accuracy: float  # 0.0 for empty bins


@dataclass(frozen=True)
class CalibrationCurve:
    bins: tuple[CalibrationBin, ...]
    ece: float
    total: int
    ci: Optional[tuple[float, float]] = None

    def to_json(self) -> dict:
        data = {
            "num_bins": len(self.bins),
            "total": self.total,
            "ece": self.ece,
            "bins": [
                {"count": b.count, "mean_confidence": b.mean_confidence, "accuracy": b.accuracy}
                for b in self.bins
            ],
        }
        if self.ci is not None:
            data["ece_ci"] = list(self.ci)
        return data


def _bin_assign(confidences: np.ndarray, bins: int) -> np.ndarray:
    # bin b covers (b/bins, (b+1)/bins]; confidence 0 lands in bin 0
    inner = np.arange(1, bins) / bins
    return np.searchsorted(inner, confidences, side="left")


def expected_calibration_error(
    prob_vectors, labels, bins: int = ECE_BINS, ci: Optional[tuple[int, int]] = None
) -> CalibrationCurve:
    """Bin max-probability confidences and average |accuracy - confidence|.

    Bin ``b`` covers ``(b/bins, (b+1)/bins]`` with 0 assigned to the
    first bin; empty bins contribute nothing. ``ci=(replicates, seed)``
    adds a percentile bootstrap interval over the scalar ECE.
    """
    probs = np.asarray(prob_vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != y.shape[0]:
        raise LengthMismatch(f"probs shape {probs.shape} incompatible with labels {y.shape}")
    if probs.shape[0] == 0:
        raise EmptyInput("no samples")
    sums = probs.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        worst = float(np.abs(sums - 1.0).max())
        raise ValueError(f"probability rows must sum to 1 (worst deviation {worst:.2e})")
    confidences = probs.max(axis=1)
    predicted = probs.argmax(axis=1)  # ties -> lowest index
    correct = predicted == y
    which = _bin_assign(confidences, bins)
    n = probs.shape[0]
    stats_bins = []
    ece = 0.0
    for b in range(bins):
        members = which == b
        count = int(members.sum())
        if count == 0:
            stats_bins.append(CalibrationBin(0, 0.0, 0.0))
            continue
        mean_conf = float(confidences[members].mean())
        acc = float(correct[members].mean())
        ece += (count / n) * abs(acc - mean_conf)
        stats_bins.append(CalibrationBin(count, mean_conf, acc))
    interval = None
    if ci is not None:
        replicates, seed = ci
        rng = np.random.default_rng(seed)
        values = np.empty(replicates, dtype=np.float64)
        for r in range(replicates):
            idx = rng.integers(0, n, size=n)
            values[r] = expected_calibration_error(probs[idx], y[idx], bins=bins).ece
        lo, hi = np.percentile(values, [2.5, 97.5])
        interval = (float(lo), float(hi))
    return CalibrationCurve(bins=tuple(stats_bins), ece=float(ece), total=n, ci=interval)


def paired_ttest(correct_a, correct_b) -> float:
    """Two-tailed paired t-test p-value on per-sample 0/1 correctness."""
    a = np.asarray(correct_a, dtype=np.float64)
    b = np.asarray(correct_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"shapes {a.shape} and {b.shape} differ")
    if a.size < 2:
        raise EmptyInput("paired test needs at least 2 samples")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise DegenerateInput("all per-sample differences are identical")
    t = diff.mean() / (sd / np.sqrt(diff.size))
    return float(2.0 * stats.t.sf(abs(t), df=diff.size - 1))


def paired_bootstrap_pvalue(
    correct_a, correct_b, replicates: int = 1000, seed: int = 0
) -> float:
    """Two-tailed bootstrap sign p-value on the mean paired difference.

    Alternative to :func:`paired_ttest` operating on resampled replicate
    means rather than the t distribution.
    """
    a = np.asarray(correct_a, dtype=np.float64)
    b = np.asarray(correct_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"shapes {a.shape} and {b.shape} differ")
    if a.size < 2:
        raise EmptyInput("paired test needs at least 2 samples")
    diff = a - b
    if np.all(diff == diff[0]) and diff[0] == 0.0:
        raise DegenerateInput("all per-sample differences are zero")
    rng = np.random.default_rng(seed)
    means = np.empty(replicates)
    for r in range(replicates):
        means[r] = diff[rng.integers(0, diff.size, size=diff.size)].mean()
    frac_low = float(np.mean(means <= 0.0))
    frac_high = float(np.mean(means >= 0.0))
    return min(1.0, 2.0 * min(frac_low, frac_high))


# -- aggregation / export ----------------------------------------------


@dataclass(frozen=True)
class TaskMetrics:
    task: TaskId
    accuracy: float
    accuracy_ci: Optional[tuple[float, float]]
    ordinal: Optional[OrdinalReport]
    calibration: CalibrationCurve
    confusion: np.ndarray

    def to_json(self, registry: VocabularyRegistry) -> dict:
        data = {
            "task": self.task.value,
            "classes": list(registry[self.task].classes),
            "accuracy": self.accuracy,
            "confusion_matrix": self.confusion.tolist(),
            "calibration": self.calibration.to_json(),
        }
        if self.accuracy_ci is not None:
            data["accuracy_ci"] = list(self.accuracy_ci)
        if self.ordinal is not None:
            data["within_one_rank"] = self.ordinal.within_one_rank
            data["beyond_one_rank"] = self.ordinal.beyond_one_rank
        return data


@dataclass(frozen=True)
class MetricsReport:
    per_task: Mapping[TaskId, TaskMetrics]
    total: int

    def to_json(self, registry: Optional[VocabularyRegistry] = None) -> dict:
        registry = registry or default_registry()
        return {
            "total": self.total,
            "tasks": {t.value: m.to_json(registry) for t, m in self.per_task.items()},
        }

    def save(self, path, registry: Optional[VocabularyRegistry] = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(registry), fh, indent=2, sort_keys=True)


def evaluate_task(
    task: TaskId,
    prob_vectors,
    labels,
    registry: Optional[VocabularyRegistry] = None,
    ci_seed: Optional[int] = None,
    replicates: int = 1000,
) -> TaskMetrics:
    """All per-task metrics from probability vectors and true indices."""
    registry = registry or default_registry()
    probs = np.asarray(prob_vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    preds = probs.argmax(axis=1)
    k = len(registry[task].classes)
    ci = None
    if ci_seed is not None:
        ci = bootstrap_ci(accuracy, preds, y, replicates=replicates, seed=ci_seed)
    ordinal = None
    if registry[task].ordinal:
        ordinal = ordinal_report(preds, y, task, registry)
    return TaskMetrics(
        task=task,
        accuracy=accuracy(preds, y),
        accuracy_ci=ci,
        ordinal=ordinal,
        calibration=expected_calibration_error(probs, y),
        confusion=confusion_matrix(preds, y, k),
    )


def export_calibration_csv(curve: CalibrationCurve, path) -> None:
    """One row per bin: lower, upper, count, mean confidence, accuracy."""
    k = len(curve.bins)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"])
        for b, stat in enumerate(curve.bins):
            writer.writerow(
                [b / k, (b + 1) / k, stat.count, stat.mean_confidence, stat.accuracy]
            )


def export_confusion_csv(matrix: np.ndarray, classes: Sequence[str], path) -> None:
    """Square count table with class names on both axes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label\\pred", *classes])
        for name, row in zip(classes, np.asarray(matrix)):
            writer.writerow([name, *row.tolist()])
