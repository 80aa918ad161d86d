"""Deterministic construction of the bundled reader-study fixtures.

The fixtures are synthetic-by-construction event logs whose analyses
land exactly on a fixed set of integer targets (per-phase correct
counts, disagreement counts, influence splits) and within a small
tolerance of target mean pairwise kappas. Integer targets are satisfied
by explicit category bookkeeping; kappas are reached by seeded
hill-climbing over label assignments using moves that leave every
integer count untouched.

Run ``python -m ihckit.study.synthesize`` to regenerate the fixture
files; they are committed, so regeneration is only needed when targets
or the construction change.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..vocab import TaskId, default_registry
from .analysis import study_report
from .events import EventLog, StudyConfig, StudyEvent, StudyImage

NUM_RATERS = 8
NUM_IMAGES = 100
NUM_CLASSES = 4  # all three studied tasks have 4 classes
KAPPA_TOL = 0.0015
MAX_ITERS = 400_000

STUDY_TASKS = (TaskId.LOCATION, TaskId.INTENSITY, TaskId.QUANTITY)

FLAG_NONE, FLAG_ADOPT, FLAG_ALT = 0, 1, 2

# Category codes for (rater, image) slots.
#   On AI-correct images (labeled studies): A1 = agree & correct, D1 = disagree (wrong).
#   On AI-wrong images: A2 = agree (wrong), D2 = disagree & correct, D3 = disagree & wrong.
#   External studies (no ground truth): AGREE / DIS only.
A1, A2, D1, D2, D3, AGREE, DIS = "A1", "A2", "D1", "D2", "D3", "AGREE", "DIS"


@dataclass(frozen=True)
class LabeledTaskTargets:
    """Targets for a task in a study that has reference labels."""

    ai_correct: int  # images (of NUM_IMAGES) where AI matches the reference
    init_correct: int  # initial rater labels matching the reference (of R*N)
    final_correct: int  # after-suggestion rater labels matching the reference
    disagreements: int  # initial != AI pairs
    adopted_split: tuple[int, int, int]  # adoptions drawn from (D1, D2, D3)
    alternative_d3: int  # changed-to-alternative cases, all drawn from D3
    a1_pairs: int  # agree-and-correct pairs; the free integer that sizes D1/D2/D3
    kappa_initial: float
    kappa_final: float


@dataclass(frozen=True)
class ExternalTaskTargets:
    """Targets for a task in a study without reference labels."""

    disagreements: int
    adopted: int
    alternative: int
    kappa_initial: float
    kappa_final: float


LABELED_TARGETS = {
    TaskId.LOCATION: LabeledTaskTargets(
        ai_correct=79, init_correct=544, final_correct=560, disagreements=216,
        adopted_split=(45, 29, 0), alternative_d3=5, a1_pairs=500,
        kappa_initial=0.70, kappa_final=0.76,
    ),
    TaskId.INTENSITY: LabeledTaskTargets(
        ai_correct=70, init_correct=456, final_correct=480, disagreements=275,
        adopted_split=(50, 26, 1), alternative_d3=2, a1_pairs=400,
        kappa_initial=0.58, kappa_final=0.66,
    ),
    TaskId.QUANTITY: LabeledTaskTargets(
        ai_correct=68, init_correct=416, final_correct=448, disagreements=329,
        adopted_split=(50, 18, 2), alternative_d3=28, a1_pairs=360,
        kappa_initial=0.62, kappa_final=0.68,
    ),
}

EXTERNAL_TARGETS = {
    TaskId.LOCATION: ExternalTaskTargets(136, 28, 1, 0.79, 0.81),
    TaskId.INTENSITY: ExternalTaskTargets(211, 43, 1, 0.70, 0.73),
    TaskId.QUANTITY: ExternalTaskTargets(233, 41, 11, 0.72, 0.75),
}


class KappaTracker:
    """Mean pairwise Cohen's kappa with O(R + R^2) incremental updates."""

    def __init__(self, labels: np.ndarray, num_classes: int):
        self.labels = labels.copy()
        self.num_classes = num_classes
        r, n = labels.shape
        self.agree = np.zeros((r, r), dtype=np.int64)
        for a in range(r):
            for b in range(r):
                self.agree[a, b] = int(np.sum(labels[a] == labels[b]))
        self.counts = np.zeros((r, num_classes), dtype=np.int64)
        for a in range(r):
            self.counts[a] = np.bincount(labels[a], minlength=num_classes)

    def set_label(self, rater: int, image: int, new: int) -> int:
        old = int(self.labels[rater, image])
        if new == old:
            return old
        column = self.labels[:, image]
        delta = (column == new).astype(np.int64) - (column == old).astype(np.int64)
        delta[rater] = 0
        self.agree[rater, :] += delta
        self.agree[:, rater] += delta
        self.counts[rater, old] -= 1
        self.counts[rater, new] += 1
        self.labels[rater, image] = new
        return old

    def mean_kappa(self) -> float:
        r, n = self.labels.shape
        p_o = self.agree / n
        marg = self.counts / n
        p_e = marg @ marg.T
        iu = np.triu_indices(r, k=1)
        return float(np.mean((p_o[iu] - p_e[iu]) / (1.0 - p_e[iu])))


class _TaskWorld:
    """Mutable state for one task's label matrices during the climb."""

    def __init__(self, rng, gt: Optional[np.ndarray], ai: np.ndarray):
        self.rng = rng
        self.gt = gt
        self.ai = ai
        self.cat = {}  # slot -> category code
        self.members = {}  # category -> list of slots
        self.pos = {}  # slot -> index in its members list
        self.flag = {}  # slot -> FLAG_*
        self.init: Optional[KappaTracker] = None
        self.final: Optional[KappaTracker] = None

    # slots are r * NUM_IMAGES + i
    @staticmethod
    def slot(r: int, i: int) -> int:
        return r * NUM_IMAGES + i

    @staticmethod
    def rc(slot: int) -> tuple[int, int]:
        return slot // NUM_IMAGES, slot % NUM_IMAGES

    def assign(self, slot: int, category: str) -> None:
        self.cat[slot] = category
        bucket = self.members.setdefault(category, [])
        self.pos[slot] = len(bucket)
        bucket.append(slot)
        self.flag[slot] = FLAG_NONE

    def move_category(self, slot: int, new_category: str) -> str:
        old = self.cat[slot]
        bucket = self.members[old]
        idx = self.pos[slot]
        last = bucket[-1]
        bucket[idx] = last
        self.pos[last] = idx
        bucket.pop()
        self.cat[slot] = new_category
        new_bucket = self.members.setdefault(new_category, [])
        self.pos[slot] = len(new_bucket)
        new_bucket.append(slot)
        return old

    def pick(self, category: str, unflagged: bool = False, tries: int = 40) -> Optional[int]:
        bucket = self.members.get(category)
        if not bucket:
            return None
        for _ in range(tries):
            slot = bucket[int(self.rng.integers(0, len(bucket)))]
            if not unflagged or self.flag[slot] == FLAG_NONE:
                return slot
        return None

    # -- label rules ----------------------------------------------------

    def wrong_label(self, image: int, exclude: tuple[int, ...]) -> int:
        choices = [c for c in range(NUM_CLASSES) if c not in exclude]
        return int(choices[int(self.rng.integers(0, len(choices)))])

    def initial_label_for(self, slot: int) -> int:
        r, i = self.rc(slot)
        category = self.cat[slot]
        if category in (A1, A2, AGREE):
            return int(self.ai[i])
        if category == D2:
            return int(self.gt[i])
        if category == D1:
            return self.wrong_label(i, (int(self.gt[i]),))
        if category == D3:
            return self.wrong_label(i, (int(self.gt[i]), int(self.ai[i])))
        if category == DIS:
            return self.wrong_label(i, (int(self.ai[i]),))
        raise AssertionError(category)

    def final_label_for(self, slot: int) -> int:
        r, i = self.rc(slot)
        flag = self.flag[slot]
        if flag == FLAG_ADOPT:
            return int(self.ai[i])
        init = int(self.init.labels[r, i])
        if flag == FLAG_ALT:
            if self.gt is not None:
                # the one class that is neither truth, AI, nor the initial pick
                exclude = {int(self.gt[i]), int(self.ai[i]), init}
                (choice,) = [c for c in range(NUM_CLASSES) if c not in exclude]
                return int(choice)
            return self.wrong_label(i, (int(self.ai[i]), init))
        return init

    def set_initial(self, slot: int, label: int) -> None:
        r, i = self.rc(slot)
        self.init.set_label(r, i, label)
        self.final.set_label(r, i, self.final_label_for(slot))

    def refresh_final(self, slot: int) -> None:
        r, i = self.rc(slot)
        self.final.set_label(r, i, self.final_label_for(slot))


def _objective(world: _TaskWorld, k1: float, k2: float) -> float:
    return abs(world.init.mean_kappa() - k1) + abs(world.final.mean_kappa() - k2)


def _climb(world: _TaskWorld, k1: float, k2: float, swap_pairs, relabel_cats, flag_cats) -> None:
    rng = world.rng
    best = _objective(world, k1, k2)
    stale = 0
    for _ in range(MAX_ITERS):
        if (
            abs(world.init.mean_kappa() - k1) < KAPPA_TOL
            and abs(world.final.mean_kappa() - k2) < KAPPA_TOL
        ):
            return
        kind = int(rng.integers(0, 3))
        undo = None
        if kind == 0 and swap_pairs:
            cat_a, cat_b = swap_pairs[int(rng.integers(0, len(swap_pairs)))]
            sa = world.pick(cat_a, unflagged=True)
            sb = world.pick(cat_b, unflagged=True)
            if sa is None or sb is None:
                continue
            prev_a = world.init.labels[world.rc(sa)[0], world.rc(sa)[1]]
            prev_b = world.init.labels[world.rc(sb)[0], world.rc(sb)[1]]
            world.move_category(sa, cat_b)
            world.move_category(sb, cat_a)
            world.set_initial(sa, world.initial_label_for(sa))
            world.set_initial(sb, world.initial_label_for(sb))

            def undo_swap(sa=sa, sb=sb, cat_a=cat_a, cat_b=cat_b, pa=int(prev_a), pb=int(prev_b)):
                world.move_category(sa, cat_a)
                world.move_category(sb, cat_b)
                world.set_initial(sa, pa)
                world.set_initial(sb, pb)

            undo = undo_swap
        elif kind == 1 and relabel_cats:
            category = relabel_cats[int(rng.integers(0, len(relabel_cats)))]
            slot = world.pick(category)
            if slot is None:
                continue
            r, i = world.rc(slot)
            prev = int(world.init.labels[r, i])
            world.set_initial(slot, world.initial_label_for(slot))

            def undo_relabel(slot=slot, prev=prev):
                world.set_initial(slot, prev)

            undo = undo_relabel
        elif kind == 2 and flag_cats:
            category, flag_value = flag_cats[int(rng.integers(0, len(flag_cats)))]
            bucket = world.members.get(category, [])
            flagged = [s for s in bucket if world.flag[s] == flag_value]
            if not flagged:
                continue
            src = flagged[int(rng.integers(0, len(flagged)))]
            dst = world.pick(category, unflagged=True)
            if dst is None:
                continue
            world.flag[src], world.flag[dst] = FLAG_NONE, flag_value
            world.refresh_final(src)
            world.refresh_final(dst)

            def undo_flag(src=src, dst=dst, flag_value=flag_value):
                world.flag[dst], world.flag[src] = FLAG_NONE, flag_value
                world.refresh_final(src)
                world.refresh_final(dst)

            undo = undo_flag
        else:
            continue
        score = _objective(world, k1, k2)
        # accept strict improvements, and sideways moves occasionally to
        # slide along plateaus
        if score < best or (score == best and rng.random() < 0.1):
            best = score
            stale = 0
        else:
            undo()
            stale += 1
    raise RuntimeError(
        f"kappa climb did not converge (objective {best:.5f}, targets {k1}/{k2})"
    )


def _build_labeled_task(task_rng, targets: LabeledTaskTargets) -> _TaskWorld:
    r_total = NUM_RATERS * NUM_IMAGES
    agreements = r_total - targets.disagreements
    d1 = NUM_RATERS * targets.ai_correct - targets.a1_pairs
    a2 = agreements - targets.a1_pairs
    d2 = targets.init_correct - targets.a1_pairs
    d3 = targets.disagreements - d1 - d2
    a1_, a2_, a3_ = targets.adopted_split
    if min(d1, a2, d2, d3) < 0:
        raise ValueError(f"infeasible a1_pairs for {targets}")
    if a1_ > d1 or a2_ > d2 or a3_ + targets.alternative_d3 > d3:
        raise ValueError(f"influence split exceeds category sizes for {targets}")
    if (a1_ - a2_) != targets.final_correct - targets.init_correct:
        raise ValueError("adopted split does not produce the required accuracy delta")

    gt = task_rng.integers(0, NUM_CLASSES, size=NUM_IMAGES)
    ai = gt.copy()
    wrong_images = task_rng.permutation(NUM_IMAGES)[: NUM_IMAGES - targets.ai_correct]
    for i in wrong_images:
        ai[i] = (gt[i] + 1 + task_rng.integers(0, NUM_CLASSES - 1)) % NUM_CLASSES

    world = _TaskWorld(task_rng, gt=gt, ai=ai)
    correct_slots = [
        world.slot(r, i)
        for r in range(NUM_RATERS)
        for i in range(NUM_IMAGES)
        if ai[i] == gt[i]
    ]
    wrong_slots = [
        world.slot(r, i)
        for r in range(NUM_RATERS)
        for i in range(NUM_IMAGES)
        if ai[i] != gt[i]
    ]
    order = task_rng.permutation(len(correct_slots))
    for pos, idx in enumerate(order):
        world.assign(correct_slots[idx], D1 if pos < d1 else A1)
    order = task_rng.permutation(len(wrong_slots))
    for pos, idx in enumerate(order):
        if pos < a2:
            world.assign(wrong_slots[idx], A2)
        elif pos < a2 + d2:
            world.assign(wrong_slots[idx], D2)
        else:
            world.assign(wrong_slots[idx], D3)

    init = np.zeros((NUM_RATERS, NUM_IMAGES), dtype=np.int64)
    for slot in range(r_total):
        r, i = world.rc(slot)
        init[r, i] = world.initial_label_for(slot)
    world.init = KappaTracker(init, NUM_CLASSES)

    for category, quota, flag_value in (
        (D1, a1_, FLAG_ADOPT),
        (D2, a2_, FLAG_ADOPT),
        (D3, a3_, FLAG_ADOPT),
        (D3, targets.alternative_d3, FLAG_ALT),
    ):
        bucket = world.members.get(category, [])
        free = [s for s in bucket if world.flag[s] == FLAG_NONE]
        chosen = task_rng.permutation(len(free))[:quota]
        for idx in chosen:
            world.flag[free[idx]] = flag_value

    world.final = KappaTracker(init, NUM_CLASSES)  # copies, then corrected per flag
    for slot in range(r_total):
        world.refresh_final(slot)

    _climb(
        world,
        targets.kappa_initial,
        targets.kappa_final,
        swap_pairs=[(A1, D1), (A2, D2), (A2, D3), (D2, D3)],
        relabel_cats=[D1, D3],
        flag_cats=[(D1, FLAG_ADOPT), (D2, FLAG_ADOPT), (D3, FLAG_ADOPT), (D3, FLAG_ALT)],
    )
    return world


def _build_external_task(task_rng, targets: ExternalTaskTargets) -> _TaskWorld:
    r_total = NUM_RATERS * NUM_IMAGES
    ai = task_rng.integers(0, NUM_CLASSES, size=NUM_IMAGES)
    world = _TaskWorld(task_rng, gt=None, ai=ai)
    order = task_rng.permutation(r_total)
    for pos, slot in enumerate(order):
        world.assign(int(slot), DIS if pos < targets.disagreements else AGREE)

    init = np.zeros((NUM_RATERS, NUM_IMAGES), dtype=np.int64)
    for slot in range(r_total):
        r, i = world.rc(slot)
        init[r, i] = world.initial_label_for(slot)
    world.init = KappaTracker(init, NUM_CLASSES)

    bucket = world.members[DIS]
    chosen = task_rng.permutation(len(bucket))
    for idx in chosen[: targets.adopted]:
        world.flag[bucket[idx]] = FLAG_ADOPT
    for idx in chosen[targets.adopted : targets.adopted + targets.alternative]:
        world.flag[bucket[idx]] = FLAG_ALT

    world.final = KappaTracker(init, NUM_CLASSES)
    for slot in range(r_total):
        world.refresh_final(slot)

    _climb(
        world,
        targets.kappa_initial,
        targets.kappa_final,
        swap_pairs=[(AGREE, DIS)],
        relabel_cats=[DIS],
        flag_cats=[(DIS, FLAG_ADOPT), (DIS, FLAG_ALT)],
    )
    return world


# -- assembling configs and events -------------------------------------

MARKER_GENES = ("CDK1", "TP53", "EGFR", "MKI67", "ERBB2", "PTEN", "VIM", "KRT18", "CDH1", "PCNA")
CELL_TYPES = ("tumor cells", "glandular cells", "squamous epithelial cells", "hepatocytes", "lymphoid cells")
TISSUE_TYPES = ("breast", "liver", "lung", "colon", "prostate", "skin", "stomach", "pancreas")
LOCALIZATIONS = ("nuclear", "cytoplasmic/membranous", "cytoplasmic/membranous & nuclear")


def _study_md5(study_id: str, index: int) -> str:
    return hashlib.md5(f"{study_id}:image:{index}".encode()).hexdigest()


def build_study(study_id: str, labeled: bool, seed: int) -> tuple[StudyConfig, list[StudyEvent]]:
    """Construct one study's config and full event stream."""
    worlds: dict[TaskId, _TaskWorld] = {}
    for offset, task in enumerate(STUDY_TASKS):
        task_rng = np.random.default_rng([seed, offset])
        if labeled:
            worlds[task] = _build_labeled_task(task_rng, LABELED_TARGETS[task])
        else:
            worlds[task] = _build_external_task(task_rng, EXTERNAL_TARGETS[task])

    raters = tuple(f"rater-{k:02d}" for k in range(1, NUM_RATERS + 1))
    images = []
    ai_predictions = {}
    for i in range(NUM_IMAGES):
        md5 = _study_md5(study_id, i)
        ground_truth = None
        if labeled:
            ground_truth = {task: int(worlds[task].gt[i]) for task in STUDY_TASKS}
        images.append(
            StudyImage(
                md5=md5,
                marker_gene=MARKER_GENES[i % len(MARKER_GENES)],
                expected_localization=LOCALIZATIONS[i % len(LOCALIZATIONS)],
                tissue_type=TISSUE_TYPES[i % len(TISSUE_TYPES)],
                cell_type=CELL_TYPES[i % len(CELL_TYPES)],
                ground_truth=ground_truth,
            )
        )
        ai_predictions[md5] = {task: int(worlds[task].ai[i]) for task in STUDY_TASKS}
    config = StudyConfig(
        study_id=study_id,
        tasks=STUDY_TASKS,
        raters=raters,
        images=tuple(images),
        ai_predictions=ai_predictions,
    )

    events: list[StudyEvent] = []
    t = 1_700_000_000.0
    for r, rater in enumerate(raters):
        for i in range(NUM_IMAGES):
            md5 = _study_md5(study_id, i)
            for phase, matrix in (("initial", "init"), ("final", "final")):
                for task in STUDY_TASKS:
                    label = int(getattr(worlds[task], matrix).labels[r, i])
                    events.append(
                        StudyEvent(
                            rater_id=rater, md5=md5, task=task, phase=phase,
                            label=label, timestamp=t,
                        )
                    )
                t += 1.0
    return config, events


def write_fixtures(out_dir) -> dict[str, dict]:
    """Generate both bundled studies and their stored reports."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for study_id, labeled, seed in (("labeled", True, 20240801), ("external", False, 20240802)):
        config, events = build_study(study_id, labeled, seed)
        with open(out_dir / f"{study_id}_study.json", "w") as fh:
            json.dump(config.to_json(), fh, indent=1, sort_keys=True)
        tmp = out_dir / f"{study_id}_events.jsonl.tmp"
        if tmp.exists():
            tmp.unlink()
        log = EventLog(tmp)
        log.extend(events)
        tmp.rename(out_dir / f"{study_id}_events.jsonl")
        report = study_report(config, events)
        with open(out_dir / f"{study_id}_report.json", "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
        reports[study_id] = report
    return reports


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "data"
    generated = write_fixtures(target)
    for name, report in generated.items():
        print(f"{name}:")
        for task, section in report["tasks"].items():
            kappa = section.get("kappa", {})
            print(
                f"  {task}: influence={section['influence']['adopted_ai']}/"
                f"{section['influence']['changed_alternative']}/{section['influence']['unchanged']}"
                f" kappa1={kappa.get('initial', {}).get('mean'):.4f}"
                f" kappa2={kappa.get('final', {}).get('mean'):.4f}"
            )
