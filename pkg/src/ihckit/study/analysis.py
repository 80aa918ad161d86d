"""Analyses over the study event log: inter-rater agreement, Cohen's
kappa, AI-influence breakdowns, and the consolidated study report.

Everything here is a pure function of (config, events); recomputing a
report from the append-only log always reproduces the stored one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from itertools import combinations
from typing import Iterable, Mapping, Optional

from ..exceptions import InsufficientRaters
from ..vocab import TaskId
from .events import StudyConfig, StudyEvent

logger = logging.getLogger(__name__)


def round_half_away(value: float, digits: int = 1) -> float:
    """Decimal rounding with ties away from zero (0.25 -> 0.3 at 1 digit)."""
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def _labels_by_rater(
    events: Iterable[StudyEvent], task: TaskId, phase: str
) -> dict[str, dict[str, int]]:
    """rater -> {md5 -> label} for one (task, phase)."""
    out: dict[str, dict[str, int]] = {}
    for e in events:
        if e.task == task and e.phase == phase:
            out.setdefault(e.rater_id, {})[e.md5] = e.label
    return out


def mean_pairwise_agreement(events: Iterable[StudyEvent], task: TaskId, phase: str) -> float:
    """Mean over rater pairs of their exact-match rate on shared images.

    Each unordered rater pair contributes the fraction of images both
    annotated on which their labels match; pairs sharing no image are
    skipped. By construction this equals the mean of the observed-
    agreement components (p_o) entering :func:`pairwise_kappas`.
    """
    by_rater = _labels_by_rater(events, task, phase)
    rates = []
    for a, b in combinations(sorted(by_rater), 2):
        shared = by_rater[a].keys() & by_rater[b].keys()
        if not shared:
            continue
        rates.append(sum(by_rater[a][m] == by_rater[b][m] for m in shared) / len(shared))
    if not rates:
        raise InsufficientRaters(f"no rater pair shares an image for {task.value}/{phase}")
    return sum(rates) / len(rates)


def cohens_kappa(labels_a: Mapping[str, int], labels_b: Mapping[str, int]) -> Optional[float]:
    """Cohen's kappa over the images two raters share.

    Chance agreement comes from each rater's own marginal label
    distribution on the shared set. Returns None for degenerate pairs:
    fewer than 2 shared images, or no label variation (p_e == 1).
    """
    shared = sorted(labels_a.keys() & labels_b.keys())
    if len(shared) < 2:
        return None
    a = [labels_a[m] for m in shared]
    b = [labels_b[m] for m in shared]
    n = len(shared)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    cats = set(a) | set(b)
    p_e = sum((a.count(c) / n) * (b.count(c) / n) for c in cats)
    if p_e == 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


def pairwise_kappas(
    events: Iterable[StudyEvent], task: TaskId, phase: str
) -> tuple[dict[tuple[str, str], float], list[tuple[str, str]]]:
    """Kappa per unordered rater pair, plus the degenerate pairs excluded."""
    by_rater = _labels_by_rater(events, task, phase)
    kappas: dict[tuple[str, str], float] = {}
    degenerate: list[tuple[str, str]] = []
    for a, b in combinations(sorted(by_rater), 2):
        k = cohens_kappa(by_rater[a], by_rater[b])
        if k is None:
            degenerate.append((a, b))
        else:
            kappas[(a, b)] = k
    return kappas, degenerate


def mean_pairwise_kappa(events: Iterable[StudyEvent], task: TaskId, phase: str) -> float:
    """Average Cohen's kappa over non-degenerate rater pairs."""
    kappas, degenerate = pairwise_kappas(events, task, phase)
    for a, b in degenerate:
        logger.warning("kappa undefined for rater pair (%s, %s) on %s/%s; excluded", a, b, task.value, phase)
    if not kappas:
        raise InsufficientRaters(f"no valid rater pair for {task.value}/{phase}")
    return sum(kappas.values()) / len(kappas)


@dataclass(frozen=True)
class InfluenceBreakdown:
    """What happened, after seeing the AI suggestion, on the cases where
    a rater's initial label disagreed with it."""

    task: TaskId
    disagreements: int
    adopted_ai: int
    changed_alternative: int
    unchanged: int
    incomplete: int  # initial-without-final cases excluded from the counts

    def __post_init__(self):
        if self.adopted_ai + self.changed_alternative + self.unchanged != self.disagreements:
            raise ValueError("influence categories must partition the disagreements")

    def percentages(self) -> dict[str, float]:
        """Shares of disagreements, rounded to one decimal (ties away from 0)."""
        if self.disagreements == 0:
            return {"adopted_ai": 0.0, "changed_alternative": 0.0, "unchanged": 0.0}
        return {
            "adopted_ai": round_half_away(100.0 * self.adopted_ai / self.disagreements),
            "changed_alternative": round_half_away(
                100.0 * self.changed_alternative / self.disagreements
            ),
            "unchanged": round_half_away(100.0 * self.unchanged / self.disagreements),
        }

    def to_json(self) -> dict:
        return {
            "task": self.task.value,
            "disagreements": self.disagreements,
            "adopted_ai": self.adopted_ai,
            "changed_alternative": self.changed_alternative,
            "unchanged": self.unchanged,
            "incomplete": self.incomplete,
            "percent": self.percentages(),
        }


def ai_influence(
    events: Iterable[StudyEvent],
    ai_predictions: Mapping[str, Mapping[TaskId, int]],
    task: TaskId,
) -> InfluenceBreakdown:
    """Classify every initial-vs-AI disagreement by its final label.

    ``final == AI`` counts as adopted, ``final == initial`` as
    unchanged, anything else as changed-to-alternative. (rater, image)
    pairs missing the final phase are excluded and tallied separately.
    """
    initial = _labels_by_rater(events, task, "initial")
    final = _labels_by_rater(events, task, "final")
    disagreements = adopted = alternative = unchanged = incomplete = 0
    for rater, images in initial.items():
        for md5, init_label in images.items():
            ai_label = ai_predictions[md5][task]
            if init_label == ai_label:
                continue
            final_label = final.get(rater, {}).get(md5)
            if final_label is None:
                incomplete += 1
                continue
            disagreements += 1
            if final_label == ai_label:
                adopted += 1
            elif final_label == init_label:
                unchanged += 1
            else:
                alternative += 1
    if incomplete:
        logger.warning("%d disagreement(s) on %s lack a final label; excluded", incomplete, task.value)
    return InfluenceBreakdown(
        task=task,
        disagreements=disagreements,
        adopted_ai=adopted,
        changed_alternative=alternative,
        unchanged=unchanged,
        incomplete=incomplete,
    )


def _rater_accuracy(
    events: Iterable[StudyEvent], config: StudyConfig, task: TaskId, phase: str
) -> Optional[dict]:
    truth = {img.md5: img.ground_truth for img in config.images}
    if any(v is None for v in truth.values()):
        return None
    correct = total = 0
    for e in events:
        if e.task == task and e.phase == phase:
            total += 1
            correct += int(e.label == truth[e.md5][task])
    if total == 0:
        return None
    return {"correct": correct, "total": total, "accuracy": correct / total}


def _ai_accuracy(config: StudyConfig, task: TaskId) -> Optional[dict]:
    if not config.has_ground_truth:
        return None
    correct = sum(
        int(config.ai_predictions[img.md5][task] == img.ground_truth[task])
        for img in config.images
    )
    return {"correct": correct, "total": len(config.images), "accuracy": correct / len(config.images)}


def study_report(config: StudyConfig, events: Iterable[StudyEvent]) -> dict:
    """The consolidated per-task analysis document for one study.

    Accuracy sections appear only when the study carries ground truth;
    agreement/kappa/influence are computed from the events alone. A
    study with no events yields a report flagged with zero coverage.
    """
    events = list(events)
    expected = len(config.raters) * len(config.images) * len(config.tasks) * 2
    report: dict = {
        "study_id": config.study_id,
        "num_images": len(config.images),
        "num_raters": len(config.raters),
        "has_ground_truth": config.has_ground_truth,
        "coverage": {
            "events": len(events),
            "expected_events": expected,
            "complete": len(events) == expected,
        },
        "tasks": {},
    }
    for task in config.tasks:
        section: dict = {}
        ai_acc = _ai_accuracy(config, task)
        if ai_acc is not None:
            section["ai_accuracy"] = ai_acc
        for phase in ("initial", "final"):
            acc = _rater_accuracy(events, config, task, phase)
            if acc is not None:
                section.setdefault("rater_accuracy", {})[phase] = acc
        for phase in ("initial", "final"):
            try:
                kappas, degenerate = pairwise_kappas(events, task, phase)
                agreement = mean_pairwise_agreement(events, task, phase)
            except InsufficientRaters:
                continue
            section.setdefault("agreement", {})[phase] = agreement
            if kappas:
                section.setdefault("kappa", {})[phase] = {
                    "mean": sum(kappas.values()) / len(kappas),
                    "pairs": len(kappas),
                    "degenerate_pairs": len(degenerate),
                }
        section["influence"] = ai_influence(events, config.ai_predictions, task).to_json()
        report["tasks"][task.value] = section
    return report
