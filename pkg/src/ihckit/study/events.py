"""Study configuration and the append-only annotation event log.

A study is a fixed image set, a rater roster, the studied tasks, and
one AI prediction per (image, task). Raters produce exactly two events
per (image, task): an ``initial`` label given blind, and a ``final``
label given after seeing the AI suggestion. Events are persisted as
JSON lines, append-only, so any analysis can be replayed from the log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from ..exceptions import SchemaError
from ..records import MD5_RE
from ..vocab import TaskId, VocabularyRegistry, default_registry

CONFIG_SCHEMA_VERSION = 1
PHASES = ("initial", "final")

DEFAULT_STUDY_TASKS = (TaskId.LOCATION, TaskId.INTENSITY, TaskId.QUANTITY)


@dataclass(frozen=True)
class StudyImage:
    """One study image with the context shown to raters.

    ``ground_truth`` is optional: reference-labeled sets have it,
    external sets do not. AI predictions are deliberately NOT stored
    here — they live on the config, keyed separately, so assignment
    payloads cannot leak them by accident.
    """

    md5: str
    marker_gene: str
    expected_localization: str
    tissue_type: str
    cell_type: str
    ground_truth: Optional[Mapping[TaskId, int]] = None
    image_path: Optional[str] = None

    def __post_init__(self):
        if not MD5_RE.match(self.md5):
            raise SchemaError(f"bad image md5 {self.md5!r}")


@dataclass(frozen=True)
class StudyConfig:
    study_id: str
    tasks: tuple[TaskId, ...]
    raters: tuple[str, ...]
    images: tuple[StudyImage, ...]
    ai_predictions: Mapping[str, Mapping[TaskId, int]]  # md5 -> task -> class index

    def __post_init__(self):
        if len(set(self.raters)) != len(self.raters):
            raise SchemaError("duplicate rater ids")
        if len({img.md5 for img in self.images}) != len(self.images):
            raise SchemaError("duplicate image md5s")
        for img in self.images:
            preds = self.ai_predictions.get(img.md5)
            missing = [t.value for t in self.tasks if preds is None or t not in preds]
            if missing:
                raise SchemaError(f"image {img.md5} lacks AI predictions for {missing}")

    @property
    def has_ground_truth(self) -> bool:
        return all(img.ground_truth is not None for img in self.images)

    def image(self, md5: str) -> StudyImage:
        for img in self.images:
            if img.md5 == md5:
                return img
        raise SchemaError(f"no image {md5} in study {self.study_id}")

    def to_json(self, registry: Optional[VocabularyRegistry] = None) -> dict:
        registry = registry or default_registry()

        def names(labels: Mapping[TaskId, int]) -> dict:
            return {t.value: registry[t].classes[i] for t, i in labels.items()}

        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "study_id": self.study_id,
            "tasks": [t.value for t in self.tasks],
            "raters": list(self.raters),
            "images": [
                {
                    "md5": img.md5,
                    "marker_gene": img.marker_gene,
                    "expected_localization": img.expected_localization,
                    "tissue_type": img.tissue_type,
                    "cell_type": img.cell_type,
                    "ground_truth": names(img.ground_truth) if img.ground_truth else None,
                    "image_path": img.image_path,
                }
                for img in self.images
            ],
            "ai_predictions": {
                md5: names(preds) for md5, preds in self.ai_predictions.items()
            },
        }

    @classmethod
    def from_json(cls, data: Mapping, registry: Optional[VocabularyRegistry] = None) -> "StudyConfig":
        registry = registry or default_registry()
        if not isinstance(data, Mapping):
            raise SchemaError("study config must be a JSON object")
        if data.get("schema_version") != CONFIG_SCHEMA_VERSION:
            raise SchemaError(f"unsupported study config schema {data.get('schema_version')!r}")
        try:
            tasks = tuple(TaskId(t) for t in data["tasks"])

            def indices(raw: Optional[Mapping]) -> Optional[dict]:
                if raw is None:
                    return None
                return {
                    TaskId(t): registry[TaskId(t)].index_of(name) for t, name in raw.items()
                }

            images = tuple(
                StudyImage(
                    md5=img["md5"],
                    marker_gene=img["marker_gene"],
                    expected_localization=img["expected_localization"],
                    tissue_type=img["tissue_type"],
                    cell_type=img["cell_type"],
                    ground_truth=indices(img.get("ground_truth")),
                    image_path=img.get("image_path"),
                )
                for img in data["images"]
            )
            return cls(
                study_id=str(data["study_id"]),
                tasks=tasks,
                raters=tuple(data["raters"]),
                images=images,
                ai_predictions={
                    md5: indices(preds) for md5, preds in data["ai_predictions"].items()
                },
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed study config: {exc}") from exc


def load_study_config(path, registry: Optional[VocabularyRegistry] = None) -> StudyConfig:
    with open(path) as fh:
        return StudyConfig.from_json(json.load(fh), registry)


@dataclass(frozen=True)
class StudyEvent:
    """One recorded annotation: (rater, image, task, phase) -> label index."""

    rater_id: str
    md5: str
    task: TaskId
    phase: str  # "initial" | "final"
    label: int
    timestamp: float

    def __post_init__(self):
        if self.phase not in PHASES:
            raise SchemaError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if self.label < 0:
            raise SchemaError(f"label index must be >= 0, got {self.label}")

    def to_json(self) -> dict:
        return {
            "rater": self.rater_id,
            "md5": self.md5,
            "task": self.task.value,
            "phase": self.phase,
            "label": self.label,
            "ts": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "StudyEvent":
        try:
            return cls(
                rater_id=str(data["rater"]),
                md5=str(data["md5"]),
                task=TaskId(data["task"]),
                phase=str(data["phase"]),
                label=int(data["label"]),
                timestamp=float(data["ts"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed study event: {exc}") from exc


class EventLog:
    """Append-only JSONL store of study events.

    With a path, every append is written through and flushed
    immediately; without one the log is memory-only (used in tests).
    Events are never mutated or removed.
    """

    def __init__(self, path=None):
        self._path = Path(path) if path is not None else None
        self._events: list[StudyEvent] = []
        if self._path is not None and self._path.exists():
            for line in self._path.read_text().splitlines():
                if line.strip():
                    self._events.append(StudyEvent.from_json(json.loads(line)))

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[StudyEvent]:
        return iter(self._events)

    def events(self) -> tuple[StudyEvent, ...]:
        return tuple(self._events)

    def append(self, event: StudyEvent) -> None:
        self._events.append(event)
        if self._path is not None:
            with open(self._path, "a") as fh:
                fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
                fh.flush()

    def extend(self, events: Iterable[StudyEvent]) -> None:
        for event in events:
            self.append(event)
