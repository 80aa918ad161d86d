"""Synthetic training corpus with visually decodable labels.

Each sample is a single-patch image split into four quadrants, one per
visual task: the quadrant's fill color encodes that task's class index.
A small model must learn the quadrant-to-head mapping, which exercises
the full pipeline (tiling, encoding, pooling, multi-head training)
quickly and with a known achievable optimum.

Quadrants: top-left = staining intensity, top-right = location,
bottom-left = quantity, bottom-right = tissue (which also fixes the
malignancy label through ``MALIGNANCY_OF``).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .records import IHCRecord
from .vocab import TaskId, VocabularyRegistry, default_registry

# one vivid color per class index; quadrant position carries the task
PALETTE = np.array(
    [
        [230, 60, 60],
        [60, 200, 80],
        [70, 90, 235],
        [235, 200, 50],
    ],
    dtype=np.uint8,
)

TISSUE_CYCLE = ("breast", "liver", "melanoma", "lymphoma")
MALIGNANCY_OF = {
    "breast": "normal",
    "liver": "normal",
    "melanoma": "cancer",
    "lymphoma": "cancer",
}

_MARKER_GENES = ("CDK1", "TP53", "EGFR", "MKI67", "ERBB2", "PTEN")
_CELL_TYPES = ("tumor cells", "glandular cells", "hepatocytes", "lymphoid cells")
_SNOMED_TEXTS = (
    "Tissue sample, NOS",
    "Biopsy specimen, NOS",
    "Resection specimen, NOS",
)


def toy_image(
    intensity: int,
    location: int,
    quantity: int,
    tissue_cycle_index: int,
    rng: np.random.Generator,
    size: int = 336,
    noise: int = 8,
) -> np.ndarray:
    """Render one quadrant-coded RGB image with mild per-pixel noise."""
    half = size // 2
    img = np.zeros((size, size, 3), dtype=np.int16)
    img[:half, :half] = PALETTE[intensity]
    img[:half, half:] = PALETTE[location]
    img[half:, :half] = PALETTE[quantity]
    img[half:, half:] = PALETTE[tissue_cycle_index]
    if noise:
        img += rng.integers(-noise, noise + 1, size=img.shape, dtype=np.int16)
    return np.clip(img, 0, 255).astype(np.uint8)


def toy_corpus(
    num_images: int = 200,
    seed: int = 0,
    size: int = 336,
    registry: VocabularyRegistry | None = None,
) -> list[IHCRecord]:
    """Build a deterministic corpus of quadrant-coded records."""
    registry = registry or default_registry()
    rng = np.random.default_rng(seed)
    records = []
    for k in range(num_images):
        intensity = int(rng.integers(0, 4))
        location = int(rng.integers(0, 4))
        quantity = int(rng.integers(0, 4))
        cycle = int(rng.integers(0, len(TISSUE_CYCLE)))
        tissue_name = TISSUE_CYCLE[cycle]
        malignancy_name = MALIGNANCY_OF[tissue_name]
        image = toy_image(intensity, location, quantity, cycle, rng, size=size)
        labels = {
            TaskId.INTENSITY: intensity,
            TaskId.LOCATION: location,
            TaskId.QUANTITY: quantity,
            TaskId.TISSUE: registry[TaskId.TISSUE].index_of(tissue_name),
            TaskId.MALIGNANCY: registry[TaskId.MALIGNANCY].index_of(malignancy_name),
        }
        records.append(
            IHCRecord(
                image_ref=image,
                md5=hashlib.md5(image.tobytes()).hexdigest(),
                tissue_class=tissue_name,
                malignancy=malignancy_name,
                snomed_code=f"T-{1000 + cycle}",
                snomed_text=_SNOMED_TEXTS[k % len(_SNOMED_TEXTS)],
                marker_gene=_MARKER_GENES[k % len(_MARKER_GENES)],
                cell_type=_CELL_TYPES[k % len(_CELL_TYPES)],
                labels=labels,
            )
        )
    return records
