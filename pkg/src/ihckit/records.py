"""The dataset atom (one image plus harmonized metadata) and split types."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

from .exceptions import SchemaError
from .vocab import TaskId, VocabularyRegistry, default_registry

MD5_RE = re.compile(r"^[0-9a-f]{32}$")
METADATA_SCHEMA_VERSION = 1

_SEXES = ("male", "female", "unknown")


@dataclass(frozen=True)
class Foreground:
    """Pointer to a foreground mask plus its tight bounding box."""

    mask_ref: object
    bbox: tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max), inclusive


@dataclass(frozen=True)
class IHCRecord:
    """One image with its metadata and the five task labels.

    Immutable after construction; ``image_ref`` is an opaque handle
    (raw encoded bytes, or a filesystem path to them).
    """

    image_ref: object
    md5: str
    tissue_class: str
    malignancy: str
    snomed_code: str
    snomed_text: str
    marker_gene: str
    cell_type: str
    labels: Mapping[TaskId, int]
    age: int | None = None
    sex: str | None = None
    source_url: str | None = None
    foreground: Foreground | None = None

    def __post_init__(self):
        if not MD5_RE.match(self.md5):
            raise ValueError(f"md5 must be 32 lowercase hex chars, got {self.md5!r}")
        if self.sex is not None and self.sex not in _SEXES:
            raise ValueError(f"sex must be one of {_SEXES}, got {self.sex!r}")
        registry = default_registry()
        labels = {TaskId(k): int(v) for k, v in self.labels.items()}
        for task, index in labels.items():
            vocab = registry[task]
            if not 0 <= index < len(vocab):
                raise ValueError(f"label index {index} out of range for task {task.value}")
        for task, value in ((TaskId.TISSUE, self.tissue_class), (TaskId.MALIGNANCY, self.malignancy)):
            if task in labels and registry[task].name_of(labels[task]) != value:
                raise ValueError(
                    f"{task.value} label {labels[task]} disagrees with field value {value!r}"
                )
        object.__setattr__(self, "labels", MappingProxyType(labels))

    def label_name(self, task: TaskId, registry: VocabularyRegistry | None = None) -> str:
        registry = registry or default_registry()
        return registry[task].name_of(self.labels[task])

    def with_image(self, image_ref) -> "IHCRecord":
        return replace(self, image_ref=image_ref)

    def to_metadata(self) -> dict:
        """JSON-serializable metadata, schema-versioned; excludes pixel data."""
        return {
            "schema_version": METADATA_SCHEMA_VERSION,
            "md5": self.md5,
            "tissue_class": self.tissue_class,
            "malignancy": self.malignancy,
            "snomed_code": self.snomed_code,
            "snomed_text": self.snomed_text,
            "marker_gene": self.marker_gene,
            "cell_type": self.cell_type,
            "age": self.age,
            "sex": self.sex,
            "labels": {t.value: i for t, i in self.labels.items()},
            "source_url": self.source_url,
            "foreground_bbox": list(self.foreground.bbox) if self.foreground else None,
        }

    @classmethod
    def from_metadata(cls, meta: dict, image_ref=None, mask_ref=None) -> "IHCRecord":
        if not isinstance(meta, dict):
            raise SchemaError(f"metadata must be a JSON object, got {type(meta).__name__}")
        if meta.get("schema_version") != METADATA_SCHEMA_VERSION:
            raise SchemaError(f"unsupported metadata schema_version {meta.get('schema_version')!r}")
        missing = [k for k in ("md5", "tissue_class", "malignancy", "labels") if k not in meta]
        if missing:
            raise SchemaError(f"metadata for {meta.get('md5', '?')} missing keys {missing}")
        bbox = meta.get("foreground_bbox")
        foreground = None
        if bbox is not None:
            foreground = Foreground(mask_ref=mask_ref, bbox=tuple(int(v) for v in bbox))
        try:
            return cls(
                image_ref=image_ref,
                md5=meta["md5"],
                tissue_class=meta["tissue_class"],
                malignancy=meta["malignancy"],
                snomed_code=meta.get("snomed_code", ""),
                snomed_text=meta.get("snomed_text", ""),
                marker_gene=meta.get("marker_gene", ""),
                cell_type=meta.get("cell_type", ""),
                labels={TaskId(k): v for k, v in meta["labels"].items()},
                age=meta.get("age"),
                sex=meta.get("sex"),
                source_url=meta.get("source_url"),
                foreground=foreground,
            )
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"invalid metadata for {meta.get('md5', '?')}: {exc}") from exc


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test md5 lists covering a record set exactly once."""

    train: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    strategy: str

    def __post_init__(self):
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise ValueError(f"train/test overlap on {len(overlap)} md5s")

    def to_json(self) -> dict:
        return {
            "train": list(self.train),
            "test": list(self.test),
            "seed": self.seed,
            "strategy": self.strategy,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetSplit":
        return cls(
            train=tuple(doc["train"]),
            test=tuple(doc["test"]),
            seed=int(doc["seed"]),
            strategy=doc["strategy"],
        )
