"""Synthetic corruption generators and the accuracy-under-noise sweep.

Both generators are pure functions of (image, level, seed): the same
seed always yields the same corruption. Severity tables are fixed:

* salt & pepper — total affected-pixel fraction by level
  {1: 1%, 2: 2%, 3: 5%, 4: 8%}, split equally between salt (white)
  and pepper (black), budget floored per component;
* cutout — (count, max area fraction) by level
  {1: (1, 5%), 2: (2, 8%), 3: (3, 10%), 4: (4, 15%)}, each rectangle's
  area uniform in [2%, max], aspect uniform in [0.3, 3.0], filled black
  (0) or mid-gray (127) with equal probability, placed fully inside the
  image so the realized area equals the drawn one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import BadLevel
from .train import Checkpoint, decode_image, predict_batch
from .vocab import ALL_TASKS, TaskId, VocabularyRegistry, default_registry

SALT_PEPPER_LEVELS = {1: 0.01, 2: 0.02, 3: 0.05, 4: 0.08}
CUTOUT_LEVELS = {1: (1, 0.05), 2: (2, 0.08), 3: (3, 0.10), 4: (4, 0.15)}
CUTOUT_MIN_AREA = 0.02
ASPECT_RANGE = (0.3, 3.0)
FILL_VALUES = (0, 127)  # black, mid-gray (floor of half of the 255 max)


def _check_level(level: int, table) -> None:
    if level not in table:
        raise BadLevel(f"level must be one of {sorted(table)}, got {level!r}")


def salt_pepper_counts(shape_hw: tuple[int, int], level: int) -> tuple[int, int]:
    """(salt, pepper) pixel budgets: floor of half the level fraction each."""
    _check_level(level, SALT_PEPPER_LEVELS)
    total = shape_hw[0] * shape_hw[1]
    per_component = math.floor(total * SALT_PEPPER_LEVELS[level] / 2.0)
    return per_component, per_component


def salt_pepper(image: np.ndarray, level: int, seed: int) -> np.ndarray:
    """Overwrite a budgeted set of pixels with pure white / pure black.

    Positions are drawn uniformly without replacement over the pixel
    grid; the first ``n_salt`` become white across all channels, the
    rest black. Input is not modified.
    """
    arr = np.asarray(image)
    n_salt, n_pepper = salt_pepper_counts(arr.shape[:2], level)
    rng = np.random.default_rng(seed)
    flat_positions = rng.choice(arr.shape[0] * arr.shape[1], size=n_salt + n_pepper, replace=False)
    ys, xs = np.unravel_index(flat_positions, arr.shape[:2])
    out = arr.copy()
    out[ys[:n_salt], xs[:n_salt]] = 255
    out[ys[n_salt:], xs[n_salt:]] = 0
    return out


@dataclass(frozen=True)
class CutoutRect:
    """One realized occlusion rectangle (top-left corner, size, fill)."""

    y: int
    x: int
    height: int
    width: int
    fill: int

    @property
    def area(self) -> int:
        return self.height * self.width

    @property
    def aspect(self) -> float:
        return self.width / self.height


def _fit_rect(shape_hw, area_frac: float, aspect: float, max_frac: float) -> tuple[int, int]:
    """Integer (height, width) realizing the drawn area/aspect.

    Rounding a continuous rectangle can push the realized area or aspect
    outside the allowed ranges, so search the integer neighborhood of
    the continuous solution for the closest pair that satisfies both
    ranges inclusively.
    """
    h_img, w_img = shape_hw
    total = h_img * w_img
    target = area_frac * total
    h0 = math.sqrt(target / aspect)
    best = None
    for h in range(max(1, math.floor(h0) - 3), min(h_img, math.ceil(h0) + 3) + 1):
        w_center = h * aspect
        for w in range(max(1, math.floor(w_center) - 3), min(w_img, math.ceil(w_center) + 3) + 1):
            area = h * w
            if not CUTOUT_MIN_AREA * total <= area <= max_frac * total:
                continue
            if not ASPECT_RANGE[0] <= w / h <= ASPECT_RANGE[1]:
                continue
            key = (abs(area - target), abs(w / h - aspect))
            if best is None or key < best[0]:
                best = (key, h, w)
    if best is None:
        raise ValueError(
            f"no feasible integer rectangle for image {shape_hw} at area {area_frac:.3f}"
        )
    return best[1], best[2]


def cutout_rects(shape_hw: tuple[int, int], level: int, seed: int) -> tuple[CutoutRect, ...]:
    """Draw the occlusion rectangles for an image of the given size."""
    _check_level(level, CUTOUT_LEVELS)
    count, max_frac = CUTOUT_LEVELS[level]
    h_img, w_img = shape_hw
    rng = np.random.default_rng(seed)
    rects = []
    for _ in range(count):
        area_frac = rng.uniform(CUTOUT_MIN_AREA, max_frac)
        aspect = rng.uniform(*ASPECT_RANGE)
        h, w = _fit_rect(shape_hw, area_frac, aspect, max_frac)
        fill = FILL_VALUES[int(rng.integers(0, 2))]
        y = int(rng.integers(0, h_img - h + 1))
        x = int(rng.integers(0, w_img - w + 1))
        rects.append(CutoutRect(y=y, x=x, height=h, width=w, fill=fill))
    return tuple(rects)


def cutout(image: np.ndarray, level: int, seed: int) -> np.ndarray:
    """Occlude the drawn rectangles; all other pixels are untouched."""
    arr = np.asarray(image)
    out = arr.copy()
    for rect in cutout_rects(arr.shape[:2], level, seed):
        out[rect.y : rect.y + rect.height, rect.x : rect.x + rect.width] = rect.fill
    return out


PERTURBATIONS = {"salt_pepper": salt_pepper, "cutout": cutout}


def perturb(image: np.ndarray, kind: str, level: int, seed: int) -> np.ndarray:
    if kind not in PERTURBATIONS:
        raise BadLevel(f"unknown perturbation kind {kind!r}; available: {sorted(PERTURBATIONS)}")
    return PERTURBATIONS[kind](image, level, seed)


# -- sweep --------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    task: TaskId
    kind: str  # "none" for the baseline row
    level: int  # 0 for the baseline row
    accuracy: float
    delta_vs_baseline: float


def robustness_sweep(
    checkpoint: Checkpoint,
    records: Sequence,
    kinds: Sequence[str] = ("salt_pepper", "cutout"),
    levels: Sequence[int] = (1, 2, 3, 4),
    seed: int = 0,
    registry: Optional[VocabularyRegistry] = None,
) -> list[SweepRow]:
    """Accuracy per task on clean images plus one row per (kind, level).

    Each sweep cell perturbs every image once, with a per-image seed
    derived from ``(seed, kind, level, index)`` so cells are independent
    and reproducible.
    """
    registry = registry or default_registry()
    for kind in kinds:
        if kind not in PERTURBATIONS:
            raise BadLevel(f"unknown perturbation kind {kind!r}")

    images = [decode_image(r) for r in records]
    labels = {t: np.array([r.labels[t] for r in records]) for t in ALL_TASKS}

    def run(cell_images) -> dict[TaskId, float]:
        staged = [r.with_image(img) for r, img in zip(records, cell_images)]
        preds = predict_batch(checkpoint, staged, registry)
        return {
            t: float(np.mean(np.array([p.index[t] for p in preds]) == labels[t]))
            for t in ALL_TASKS
        }

    rows: list[SweepRow] = []
    baseline = run(images)
    for task in ALL_TASKS:
        rows.append(SweepRow(task, "none", 0, baseline[task], 0.0))
    for kind in kinds:
        for level in levels:
            kind_code = sorted(PERTURBATIONS).index(kind)
            cell = [
                perturb(img, kind, level, _cell_seed(seed, kind_code, level, i))
                for i, img in enumerate(images)
            ]
            acc = run(cell)
            for task in ALL_TASKS:
                rows.append(
                    SweepRow(task, kind, level, acc[task], acc[task] - baseline[task])
                )
    return rows


def _cell_seed(seed: int, kind_code: int, level: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, kind_code, level, index]).generate_state(1)[0])


def export_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "kind", "level", "accuracy", "delta_vs_baseline"])
        for row in rows:
            writer.writerow([row.task.value, row.kind, row.level, row.accuracy, row.delta_vs_baseline])
