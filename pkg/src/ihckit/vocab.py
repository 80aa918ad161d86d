"""Task identities, label vocabularies, and metadata normalization rules.

Everything here is immutable after construction and safe for concurrent
use. The five tasks, their class lists, the tissue merge tables, and the
label aliases are loaded from ``data/vocab.yaml`` once per process.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources

import yaml

from .exceptions import LabelLeakage, MissingField, UnknownLabel, UnknownTissue


class TaskId(str, Enum):
    """The five prediction tasks."""

    INTENSITY = "intensity"
    LOCATION = "location"
    QUANTITY = "quantity"
    TISSUE = "tissue"
    MALIGNANCY = "malignancy"

    @property
    def is_primary(self) -> bool:
        return self in (TaskId.INTENSITY, TaskId.LOCATION, TaskId.QUANTITY)

    @property
    def is_auxiliary(self) -> bool:
        return not self.is_primary


PRIMARY_TASKS = (TaskId.LOCATION, TaskId.INTENSITY, TaskId.QUANTITY)
AUXILIARY_TASKS = (TaskId.TISSUE, TaskId.MALIGNANCY)
ALL_TASKS = tuple(TaskId)


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered class list for one task.

    ``ranks`` are positional (0..n-1) and only meaningful when
    ``ordinal`` is true; class order is therefore a compatibility
    contract.
    """

    task: TaskId
    classes: tuple[str, ...]
    ordinal: bool
    aliases: dict[str, str] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"duplicate class names in {self.task} vocabulary")

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def ranks(self) -> tuple[int, ...] | None:
        return tuple(range(len(self.classes))) if self.ordinal else None

    def index_of(self, raw: str, strict: bool = False) -> int:
        """Return the class index for ``raw``.

        Matching is case-insensitive and whitespace-trimmed. In strict
        mode only canonical class names are accepted; otherwise the
        configured aliases are consulted as a fallback.
        """
        key = _norm(raw)
        for i, name in enumerate(self.classes):
            if _norm(name) == key:
                return i
        if not strict and key in self.aliases:
            return self.index_of(self.aliases[key], strict=True)
        raise UnknownLabel(self.task.value, raw)

    def name_of(self, index: int) -> str:
        return self.classes[index]


def _norm(raw: str) -> str:
    return raw.strip().lower()


@dataclass(frozen=True)
class TissueTable:
    """Merge rules mapping raw tissue names onto merged classes."""

    normal_types: tuple[str, ...]
    cancer_types: tuple[str, ...]
    strip_suffixes: tuple[str, ...]
    irregular: dict[str, str]

    def merged_class(self, raw: str) -> str:
        key = _norm(raw)
        if key in self.irregular:
            return self.irregular[key]
        for suffix in sorted(self.strip_suffixes, key=len, reverse=True):
            if key.endswith(suffix):
                return key[: -len(suffix)].strip()
        return key

    def merged_classes(self) -> tuple[str, ...]:
        names = {self.merged_class(t) for t in self.normal_types}
        names |= {self.merged_class(t) for t in self.cancer_types}
        return tuple(sorted(names))

    def cancer_only_classes(self) -> frozenset[str]:
        """Merged names that can only denote a cancer type."""
        normal = {self.merged_class(t) for t in self.normal_types}
        cancer = {self.merged_class(t) for t in self.cancer_types}
        return frozenset(cancer - normal)


class VocabularyRegistry:
    """All five vocabularies plus the tissue merge table, from one config."""

    def __init__(self, config: dict):
        if config.get("schema_version") != 1:
            raise ValueError("unsupported vocab config schema_version")
        tissue_cfg = config["tissue"]
        self.tissue_table = TissueTable(
            normal_types=tuple(tissue_cfg["normal_types"]),
            cancer_types=tuple(tissue_cfg["cancer_types"]),
            strip_suffixes=tuple(tissue_cfg["strip_suffixes"]),
            irregular={_norm(k): _norm(v) for k, v in (tissue_cfg.get("irregular") or {}).items()},
        )
        tissue_classes = self.tissue_table.merged_classes()
        if len(tissue_classes) != 58:
            raise ValueError(
                f"tissue merge produced {len(tissue_classes)} classes, expected 58; "
                "check the normal/cancer type lists in the vocab config"
            )
        self._vocabs: dict[TaskId, LabelVocabulary] = {}
        for task in TaskId:
            if task is TaskId.TISSUE:
                self._vocabs[task] = LabelVocabulary(task, tissue_classes, ordinal=False)
                continue
            spec = config["vocabularies"][task.value]
            aliases = {}
            for canonical, names in (spec.get("aliases") or {}).items():
                for alias in names:
                    aliases[_norm(str(alias))] = canonical
            self._vocabs[task] = LabelVocabulary(
                task, tuple(spec["classes"]), bool(spec["ordinal"]), aliases
            )
        self._cancer_only = self.tissue_table.cancer_only_classes()
        self._cancer_raw = {_norm(t) for t in self.tissue_table.cancer_types}

    def __getitem__(self, task: TaskId | str) -> LabelVocabulary:
        return self._vocabs[TaskId(task)]

    def tasks(self) -> tuple[TaskId, ...]:
        return ALL_TASKS

    def class_counts(self) -> dict[TaskId, int]:
        return {t: len(v) for t, v in self._vocabs.items()}

    def content_hash(self) -> str:
        """MD5 over the canonical class lists; pinned into checkpoints."""
        canon = {t.value: list(v.classes) for t, v in self._vocabs.items()}
        blob = json.dumps(canon, sort_keys=True).encode()
        return hashlib.md5(blob).hexdigest()

    # -- operations -------------------------------------------------

    def encode_label(self, task: TaskId | str, raw: str, strict: bool = False) -> int:
        """Map a raw class name (or alias) to its index in the task vocabulary."""
        return self[task].index_of(raw, strict=strict)

    def normalize_tissue(self, raw_tissue: str) -> tuple[str, str]:
        """Map a raw tissue name to ``(merged_class, malignancy)``.

        The merge strips trailing " cancer"/" tissue" suffixes, with the
        irregular-name table taking precedence. Malignancy is "cancer"
        iff the raw name carried a cancer designation or can only denote
        a configured cancer type.
        """
        if not raw_tissue or not raw_tissue.strip():
            raise UnknownTissue(raw_tissue)
        key = _norm(raw_tissue)
        cls = self.tissue_table.merged_class(key)
        if cls not in self[TaskId.TISSUE].classes:
            raise UnknownTissue(raw_tissue)
        is_cancer = (
            key.endswith(" cancer")
            or key in self._cancer_raw
            or cls in self._cancer_only
        )
        return cls, "cancer" if is_cancer else "normal"

    def build_caption(self, record) -> str:
        """Assemble the training caption for a record.

        Template: ``{Tissue}. {snomed_text}. Antibody (gene): {gene} for
        {cell_type}``. Deterministic, and refuses to emit a caption that
        would leak an intensity/location/quantity class word into the
        text branch.
        """
        values = {}
        for name in ("tissue_class", "snomed_text", "marker_gene", "cell_type"):
            value = getattr(record, name, None)
            if not value or not str(value).strip():
                raise MissingField(name)
            values[name] = str(value).strip()
        tissue = values["tissue_class"]
        caption = (
            f"{tissue[0].upper()}{tissue[1:]}. {values['snomed_text']}. "
            f"Antibody (gene): {values['marker_gene']} for {values['cell_type']}"
        )
        self._check_leakage(caption)
        return caption

    def _check_leakage(self, caption: str) -> None:
        lowered = caption.lower()
        for task in (TaskId.INTENSITY, TaskId.LOCATION, TaskId.QUANTITY):
            for cls in self[task].classes:
                for word in re.findall(r"[a-z]+", cls.lower()):
                    if re.search(rf"\b{re.escape(word)}\b", lowered):
                        raise LabelLeakage(
                            f"caption would contain {task.value} class word {word!r}: {caption!r}"
                        )
                if not re.search(r"[a-z]", cls) and cls.lower() in lowered:
                    raise LabelLeakage(
                        f"caption would contain {task.value} class {cls!r}: {caption!r}"
                    )


@lru_cache(maxsize=1)
def default_registry() -> VocabularyRegistry:
    """The registry backed by the config file shipped with the package."""
    text = resources.files("ihckit.data").joinpath("vocab.yaml").read_text()
    return VocabularyRegistry(yaml.safe_load(text))


def load_registry(path) -> VocabularyRegistry:
    with open(path) as fh:
        return VocabularyRegistry(yaml.safe_load(fh))


# Module-level conveniences bound to the shipped config.

def encode_label(task: TaskId | str, raw: str, strict: bool = False) -> int:
    return default_registry().encode_label(task, raw, strict=strict)


def normalize_tissue(raw_tissue: str) -> tuple[str, str]:
    return default_registry().normalize_tissue(raw_tissue)


def build_caption(record) -> str:
    return default_registry().build_caption(record)
