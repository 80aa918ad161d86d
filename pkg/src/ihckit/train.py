"""Optimization loop, checkpoints, and batch inference.

Training is deterministic given the seed: parameter init, data order,
and the per-sample caption-inclusion draws all flow from it. Checkpoints
bundle the parameters with the architecture config, the train config,
the step counter, and the vocabulary hashes they were trained against,
so stale checkpoints are rejected instead of silently mislabeling.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from .exceptions import DataError, EmptyInput, VocabularyMismatch
from .model.context import CellTypeVocabulary
from .model.encoder import ENCODER_PRESETS, EncoderConfig, tile_image
from .model.network import IHCNetwork, NetworkConfig, PredictionSet, multitask_loss, per_task_losses
from .records import IHCRecord
from .vocab import ALL_TASKS, TaskId, VocabularyRegistry, default_registry

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
LOG_EVERY = 50


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters (model geometry rides along)."""

    learning_rate: float = 1e-6
    weight_decay: float = 1e-5
    epochs: int = 1
    batch_size: int = 2
    seed: int = 0
    caption_probability: float = 0.5
    shuffle: bool = True
    accumulate: int = 1
    encoder: EncoderConfig = field(default_factory=lambda: ENCODER_PRESETS["tiny"])
    embed_dim: int = 128

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.caption_probability <= 1.0:
            raise ValueError("caption_probability must be in [0, 1]")
        if self.accumulate < 1:
            raise ValueError("accumulate must be >= 1")

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "TrainConfig":
        data = dict(data)
        if "encoder" in data and not isinstance(data["encoder"], EncoderConfig):
            data["encoder"] = EncoderConfig(**data["encoder"])
        return cls(**data)


@dataclass
class Checkpoint:
    """Everything needed to reload and run the trained model."""

    state_dict: dict
    network_config: NetworkConfig
    train_config: TrainConfig
    step: int
    vocab_hashes: dict[str, str]

    def save(self, path) -> None:
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "state_dict": self.state_dict,
                "network_config": self.network_config.to_json(),
                "train_config": self.train_config.to_json(),
                "step": self.step,
                "vocab_hashes": self.vocab_hashes,
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "Checkpoint":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        version = blob.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise VocabularyMismatch(
                f"checkpoint format {version!r} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
            )
        return cls(
            state_dict=blob["state_dict"],
            network_config=NetworkConfig.from_json(blob["network_config"]),
            train_config=TrainConfig.from_json(blob["train_config"]),
            step=int(blob["step"]),
            vocab_hashes=dict(blob["vocab_hashes"]),
        )

    def build_network(self, registry: Optional[VocabularyRegistry] = None) -> IHCNetwork:
        registry = registry or default_registry()
        if registry.content_hash() != self.vocab_hashes.get("labels"):
            raise VocabularyMismatch(
                "checkpoint was trained against different label vocabularies "
                f"({self.vocab_hashes.get('labels')} != {registry.content_hash()})"
            )
        net = IHCNetwork(self.network_config, registry)
        net.load_state_dict(self.state_dict)
        net.eval()
        return net


# -- data plumbing ----------------------------------------------------


def decode_image(record: IHCRecord) -> np.ndarray:
    """Materialize a record's pixels as (H, W, 3) uint8."""
    ref = record.image_ref
    try:
        if isinstance(ref, np.ndarray):
            arr = ref
        elif isinstance(ref, (bytes, bytearray)):
            arr = np.asarray(Image.open(io.BytesIO(ref)).convert("RGB"))
        elif isinstance(ref, (str, Path)):
            arr = np.asarray(Image.open(ref).convert("RGB"))
        else:
            raise DataError(f"record {record.md5}: unusable image_ref ({type(ref).__name__})")
    except (OSError, ValueError) as exc:
        raise DataError(f"record {record.md5}: cannot decode image: {exc}") from exc
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    return arr[..., :3].astype(np.uint8)


@dataclass
class _Sample:
    patches: np.ndarray  # (K, P, P, 3)
    cell_index: int
    caption: Optional[str]
    labels: dict[TaskId, int]


def _prepare(
    records: Sequence[IHCRecord],
    registry: VocabularyRegistry,
    cell_vocab: CellTypeVocabulary,
    patch_size: int,
    with_captions: bool,
) -> list[_Sample]:
    samples = []
    for record in records:
        missing = [t for t in ALL_TASKS if t not in record.labels]
        if missing:
            raise DataError(f"record {record.md5} lacks labels for {[t.value for t in missing]}")
        caption = None
        if with_captions:
            try:
                caption = registry.build_caption(record)
            except Exception:
                caption = None  # caption is an optional training signal
        samples.append(
            _Sample(
                patches=tile_image(decode_image(record), patch_size=patch_size).patches,
                cell_index=cell_vocab.index_of(record.cell_type),
                caption=caption,
                labels=dict(record.labels),
            )
        )
    return samples


def _label_tensor(batch: Sequence[_Sample]) -> dict[TaskId, torch.Tensor]:
    return {
        task: torch.tensor([s.labels[task] for s in batch], dtype=torch.long)
        for task in ALL_TASKS
    }


# -- training ---------------------------------------------------------

StepCallback = Callable[[int, float, dict[TaskId, float]], None]


def train(
    records: Sequence[IHCRecord],
    config: TrainConfig,
    registry: Optional[VocabularyRegistry] = None,
    on_step: Optional[StepCallback] = None,
) -> Checkpoint:
    """Fit the network on labeled records with Adam.

    Single-worker, in-memory, sequential over the (optionally seeded
    shuffled) record order; loss is logged every ``LOG_EVERY`` optimizer
    steps as ``step, total, per-task``. Deterministic given
    ``config.seed``.
    """
    if not records:
        raise EmptyInput("no records to train on")
    registry = registry or default_registry()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    cell_vocab = CellTypeVocabulary.from_corpus(
        [r.cell_type for r in records if r.cell_type]
    )
    net_config = NetworkConfig(
        encoder=config.encoder, embed_dim=config.embed_dim, cell_classes=cell_vocab.classes
    )
    net = IHCNetwork(net_config, registry)
    net.train()
    optimizer = torch.optim.Adam(
        net.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )

    with_captions = config.caption_probability > 0
    samples = _prepare(records, registry, cell_vocab, config.encoder.patch_size, with_captions)

    step = 0
    optimizer.zero_grad()
    pending = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples)) if config.shuffle else np.arange(len(samples))
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            use_caption = torch.tensor(
                [
                    s.caption is not None and rng.random() < config.caption_probability
                    for s in batch
                ]
            )
            logits = net(
                [s.patches for s in batch],
                torch.tensor([s.cell_index for s in batch], dtype=torch.long),
                captions=[s.caption for s in batch],
                caption_mask=use_caption,
            )
            labels = _label_tensor(batch)
            loss = multitask_loss(logits, labels)
            (loss / config.accumulate).backward()
            pending += 1
            if pending == config.accumulate:
                optimizer.step()
                optimizer.zero_grad()
                pending = 0
                step += 1
                if step % LOG_EVERY == 0 or on_step is not None:
                    breakdown = per_task_losses(logits, labels)
                    if step % LOG_EVERY == 0:
                        logger.info(
                            "step %d loss %.4f (%s)",
                            step,
                            loss.item(),
                            ", ".join(f"{t.value}={v:.4f}" for t, v in breakdown.items()),
                        )
                    if on_step is not None:
                        on_step(step, loss.item(), breakdown)
    if pending:
        optimizer.step()
        optimizer.zero_grad()
        step += 1
    net.eval()
    return Checkpoint(
        state_dict=net.state_dict(),
        network_config=net_config,
        train_config=config,
        step=step,
        vocab_hashes={
            "labels": registry.content_hash(),
            "cell_types": _cell_hash(cell_vocab),
        },
    )


def _cell_hash(cell_vocab: CellTypeVocabulary) -> str:
    return hashlib.md5(json.dumps(list(cell_vocab.classes)).encode()).hexdigest()


def predict_batch(
    checkpoint: Checkpoint,
    records: Sequence[IHCRecord],
    registry: Optional[VocabularyRegistry] = None,
    batch_size: int = 32,
) -> list[PredictionSet]:
    """Order-preserving eval-mode predictions for each record."""
    registry = registry or default_registry()
    net = checkpoint.build_network(registry)
    cell_vocab = CellTypeVocabulary(checkpoint.network_config.cell_classes)
    patch_size = checkpoint.network_config.encoder.patch_size
    out: list[PredictionSet] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        patch_sets = [
            tile_image(decode_image(r), patch_size=patch_size).patches for r in chunk
        ]
        cells = torch.tensor([cell_vocab.index_of(r.cell_type) for r in chunk], dtype=torch.long)
        out.extend(net.predict(patch_sets, cells))
    return out
