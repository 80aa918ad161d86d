"""Shared fixtures: small corpora, a session-scoped trained checkpoint."""

import hashlib
import io

import numpy as np
import pytest
from PIL import Image

from ihckit.records import IHCRecord
from ihckit.synthetic import toy_corpus
from ihckit.train import TrainConfig, train
from ihckit.vocab import TaskId, default_registry


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def small_corpus():
    return toy_corpus(24, seed=123)


@pytest.fixture(scope="session")
def tiny_checkpoint(small_corpus):
    config = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=8, seed=0)
    return train(small_corpus, config)


def make_png_record(index: int, rng: np.random.Generator, side: int = 6, **overrides) -> IHCRecord:
    """A tiny PNG-backed record with randomized metadata (for curation tests)."""
    registry = default_registry()
    pixels = rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    image_bytes = buf.getvalue()

    tissue_vocab = registry[TaskId.TISSUE]
    malignancy_vocab = registry[TaskId.MALIGNANCY]
    tissue_index = int(rng.integers(0, len(tissue_vocab.classes)))
    tissue_name = tissue_vocab.classes[tissue_index]
    malignancy_index = int(rng.integers(0, 2))
    fields = dict(
        image_ref=image_bytes,
        md5=hashlib.md5(image_bytes).hexdigest(),
        tissue_class=tissue_name,
        malignancy=malignancy_vocab.classes[malignancy_index],
        snomed_code=f"T-{index:05d}",
        snomed_text="Tissue sample, NOS",
        marker_gene=f"GENE{index % 17}",
        cell_type="tumor cells",
        labels={
            TaskId.INTENSITY: int(rng.integers(0, 4)),
            TaskId.LOCATION: int(rng.integers(0, 4)),
            TaskId.QUANTITY: int(rng.integers(0, 4)),
            TaskId.TISSUE: tissue_index,
            TaskId.MALIGNANCY: malignancy_index,
        },
        age=int(rng.integers(20, 90)),
        sex=("male", "female", "unknown")[int(rng.integers(0, 3))],
        source_url=f"https://example.org/images/{index}",
    )
    fields.update(overrides)
    return IHCRecord(**fields)
