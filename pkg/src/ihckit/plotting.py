"""Static figure rendering from the exported CSV tables.

Each function takes a CSV produced by the metrics/robustness exporters
and writes a PNG. Figures are plain matplotlib with the Agg backend, so
rendering works headless; no interactive surface is provided.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .exceptions import SchemaError


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path} is empty")
    return rows[0], rows[1:]


def plot_calibration(csv_path, out_path) -> None:
    """Reliability diagram: per-bin accuracy vs mean confidence."""
    header, rows = _read_csv(csv_path)
    expected = ["bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"]
    if header != expected:
        raise SchemaError(f"unexpected calibration header {header}")
    lowers = [float(r[0]) for r in rows]
    uppers = [float(r[1]) for r in rows]
    counts = [int(r[2]) for r in rows]
    confidences = [float(r[3]) for r in rows]
    accuracies = [float(r[4]) for r in rows]

    fig, ax = plt.subplots(figsize=(5, 5))
    width = [u - l for l, u in zip(lowers, uppers)]
    centers = [(l + u) / 2 for l, u in zip(lowers, uppers)]
    ax.bar(
        centers,
        [a if c else 0.0 for a, c in zip(accuracies, counts)],
        width=width,
        edgecolor="black",
        color="#7fb3d5",
        label="accuracy",
    )
    ax.plot([0, 1], [0, 1], "k--", linewidth=1, label="perfect calibration")
    occupied = [(m, a) for m, a, c in zip(confidences, accuracies, counts) if c]
    if occupied:
        ax.plot(*zip(*occupied), "o-", color="#c0392b", label="observed")
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_confusion(csv_path, out_path) -> None:
    """Heatmap of the confusion-count table."""
    header, rows = _read_csv(csv_path)
    if not header or not header[0].startswith("label"):
        raise SchemaError(f"unexpected confusion header {header}")
    classes = header[1:]
    matrix = [[int(v) for v in row[1:]] for row in rows]

    size = max(4.0, 0.45 * len(classes))
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(classes)), classes, rotation=90, fontsize=7)
    ax.set_yticks(range(len(classes)), classes, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if len(classes) <= 12:
        for i, row in enumerate(matrix):
            for j, value in enumerate(row):
                ax.text(j, i, str(value), ha="center", va="center", fontsize=7)
    fig.colorbar(im, fraction=0.04)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_sweep(csv_path, out_path) -> None:
    """Accuracy vs perturbation level, one panel per task, line per kind."""
    header, rows = _read_csv(csv_path)
    expected = ["task", "kind", "level", "accuracy", "delta_vs_baseline"]
    if header != expected:
        raise SchemaError(f"unexpected sweep header {header}")
    tasks = []
    series = defaultdict(list)  # (task, kind) -> [(level, accuracy)]
    baselines = {}
    for task, kind, level, acc, _delta in rows:
        if task not in tasks:
            tasks.append(task)
        if kind == "none":
            baselines[task] = float(acc)
        else:
            series[(task, kind)].append((int(level), float(acc)))

    fig, axes = plt.subplots(1, len(tasks), figsize=(4 * len(tasks), 3.5), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        if task in baselines:
            ax.axhline(baselines[task], color="gray", linestyle="--", linewidth=1, label="clean")
        for (t, kind), points in sorted(series.items()):
            if t != task:
                continue
            points = sorted(points)
            ax.plot([p[0] for p in points], [p[1] for p in points], "o-", label=kind)
        ax.set_title(task)
        ax.set_xlabel("level")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_all(out_dir, calibration=None, confusion=None, sweep=None) -> list[Path]:
    """Render whichever CSVs are given; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for csv_path, renderer, stem in (
        (calibration, plot_calibration, "calibration"),
        (confusion, plot_confusion, "confusion"),
        (sweep, plot_sweep, "sweep"),
    ):
        if csv_path is not None:
            target = out_dir / f"{stem}.png"
            renderer(csv_path, target)
            written.append(target)
    return written
