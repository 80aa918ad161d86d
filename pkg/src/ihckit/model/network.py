"""The full multi-task scoring network and its loss.

One image maps to a single shared embedding (tile -> encode -> project ->
gated attention pool), context embeddings are fused in by element-wise
sum, and five parallel affine heads emit per-task logits: staining
intensity, location, quantity, tissue class, and malignancy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..exceptions import MissingLabel
from ..vocab import ALL_TASKS, TaskId, VocabularyRegistry
from .attention import GatedAttentionPool
from .context import UNKNOWN_CELL_TYPE, CaptionEncoder, CellTypeEncoder, fuse
from .encoder import ENCODER_PRESETS, EncoderConfig, TinyTransformerEncoder, TokenProjection


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters; everything needed to rebuild the net."""

    encoder: EncoderConfig = field(default_factory=lambda: ENCODER_PRESETS["tiny"])
    embed_dim: int = 128
    caption_buckets: int = 512
    caption_token_dim: int = 64
    cell_classes: tuple[str, ...] = (UNKNOWN_CELL_TYPE,)

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["cell_classes"] = list(self.cell_classes)
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "NetworkConfig":
        return cls(
            encoder=EncoderConfig(**data["encoder"]),
            embed_dim=int(data["embed_dim"]),
            caption_buckets=int(data["caption_buckets"]),
            caption_token_dim=int(data["caption_token_dim"]),
            cell_classes=tuple(data["cell_classes"]),
        )


@dataclass(frozen=True)
class PredictionSet:
    """Per-task softmax outputs for one image."""

    probs: Mapping[TaskId, np.ndarray]
    index: Mapping[TaskId, int]
    confidence: Mapping[TaskId, float]

    @classmethod
    def from_probs(cls, probs: Mapping[TaskId, np.ndarray]) -> "PredictionSet":
        index = {t: int(np.argmax(p)) for t, p in probs.items()}
        confidence = {t: float(p[index[t]]) for t, p in probs.items()}
        return cls(probs=probs, index=index, confidence=confidence)

    def to_json(self, registry: VocabularyRegistry) -> dict:
        return {
            task.value: {
                "class": registry[task].name_of(self.index[task]),
                "index": self.index[task],
                "confidence": self.confidence[task],
                "probs": [float(p) for p in self.probs[task]],
            }
            for task in self.probs
        }


class IHCNetwork(nn.Module):
    """Five-headed attention-MIL classifier over tiled images."""

    def __init__(self, config: NetworkConfig, registry: VocabularyRegistry):
        super().__init__()
        self.config = config
        self.registry = registry
        self.encoder = TinyTransformerEncoder(config.encoder)
        self.projection = TokenProjection(config.encoder.token_dim, config.embed_dim)
        self.pool = GatedAttentionPool(config.embed_dim)
        self.cell_encoder = CellTypeEncoder(len(config.cell_classes), config.embed_dim)
        self.caption_encoder = CaptionEncoder(
            config.embed_dim, config.caption_buckets, config.caption_token_dim
        )
        self.heads = nn.ModuleDict(
            {
                task.value: nn.Linear(config.embed_dim, len(registry[task].classes))
                for task in ALL_TASKS
            }
        )

    # -- image branch --------------------------------------------------

    def _as_patch_tensor(self, patches) -> torch.Tensor:
        t = torch.as_tensor(np.asarray(patches))
        device = self.projection.linear.weight.device
        return t.to(device)

    def embed_image(self, patches) -> tuple[torch.Tensor, torch.Tensor]:
        """Embed one image's ``(K, P, P, 3)`` patch stack.

        Returns the pooled ``(E,)`` embedding and the ``(K*T,)`` attention
        weights over the concatenated token set.
        """
        t = self._as_patch_tensor(patches)
        tokens = self.projection(self.encoder(t))  # (K, T, E)
        return self.pool(tokens.reshape(-1, tokens.shape[-1]))

    def embed_images(self, patch_sets: Sequence) -> torch.Tensor:
        """Embed a batch of per-image patch stacks to ``(B, E)``.

        Stacks with a shared patch count run as one vectorized pass;
        otherwise each image is pooled separately.
        """
        counts = {len(p) for p in patch_sets}
        if len(counts) == 1:
            t = torch.stack([self._as_patch_tensor(p) for p in patch_sets])  # (B, K, P, P, 3)
            b, k = t.shape[:2]
            tokens = self.projection(self.encoder(t.reshape(b * k, *t.shape[2:])))
            pooled, _ = self.pool(tokens.reshape(b, -1, tokens.shape[-1]))
            return pooled
        return torch.stack([self.embed_image(p)[0] for p in patch_sets])

    # -- full forward ----------------------------------------------------

    def forward(
        self,
        patch_sets: Sequence,
        cell_indices: torch.Tensor,
        captions: Optional[Sequence[Optional[str]]] = None,
        caption_mask: Optional[torch.Tensor] = None,
    ) -> dict[TaskId, torch.Tensor]:
        """Compute per-task logits ``(B, C_task)`` for a batch.

        ``captions`` are consulted only where ``caption_mask`` is true
        (training-time augmentation); with no mask the caption branch is
        never evaluated, so outputs are bit-identical whether or not
        caption text is supplied.
        """
        tissue = self.embed_images(patch_sets)
        context = self.cell_encoder(cell_indices)
        fused = fuse(tissue, context)
        if captions is not None and caption_mask is not None and bool(caption_mask.any()):
            rows = []
            for i in range(fused.shape[0]):
                if bool(caption_mask[i]) and captions[i]:
                    rows.append(fused[i] + self.caption_encoder(captions[i]))
                else:
                    rows.append(fused[i])
            fused = torch.stack(rows)
        return {task: self.heads[task.value](fused) for task in ALL_TASKS}

    @torch.no_grad()
    def predict(
        self, patch_sets: Sequence, cell_indices: torch.Tensor
    ) -> list[PredictionSet]:
        """Eval-mode per-image predictions (caption branch always off)."""
        was_training = self.training
        self.eval()
        try:
            logits = self.forward(patch_sets, cell_indices)
            probs = {t: torch.softmax(v, dim=-1).cpu().numpy() for t, v in logits.items()}
        finally:
            self.train(was_training)
        return [
            PredictionSet.from_probs({t: probs[t][i] for t in probs})
            for i in range(len(patch_sets))
        ]


def multitask_loss(
    logits: Mapping[TaskId, torch.Tensor], labels: Mapping[TaskId, torch.Tensor]
) -> torch.Tensor:
    """Sum of per-task categorical cross-entropies, weight 1 each."""
    total = None
    for task in ALL_TASKS:
        if task not in logits or task not in labels:
            raise MissingLabel(task.value)
        term = F.cross_entropy(logits[task], labels[task])
        total = term if total is None else total + term
    return total


def per_task_losses(
    logits: Mapping[TaskId, torch.Tensor], labels: Mapping[TaskId, torch.Tensor]
) -> dict[TaskId, float]:
    """Detached per-task cross-entropy values, for logging."""
    out = {}
    for task in ALL_TASKS:
        if task not in logits or task not in labels:
            raise MissingLabel(task.value)
        out[task] = float(F.cross_entropy(logits[task], labels[task]).detach())
    return out
