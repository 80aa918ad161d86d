"""Context branch: cell-type and caption embeddings plus fusion.

Cell types are one-hot encoded and affinely projected into the shared
``E``-dimensional space. Captions go through a deterministic hashed
bag-of-token-embeddings encoder (trainable). Fusion is an element-wise
sum, which keeps the head input width fixed whether or not the caption
branch fires.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from typing import Iterable, Optional

import torch
import torch.nn.functional as F
from torch import nn

from ..exceptions import EmptyInput, UnknownCellType

UNKNOWN_CELL_TYPE = "<unk>"
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class CellTypeVocabulary:
    """Cell-type names mapped to indices, with an unknown bucket at 0."""

    classes: tuple[str, ...]

    def __post_init__(self):
        if not self.classes or self.classes[0] != UNKNOWN_CELL_TYPE:
            raise ValueError(f"classes must start with the {UNKNOWN_CELL_TYPE!r} bucket")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate cell-type names")

    @classmethod
    def from_corpus(cls, cell_types: Iterable[str]) -> "CellTypeVocabulary":
        seen = sorted({ct.strip().lower() for ct in cell_types if ct and ct.strip()})
        return cls(classes=(UNKNOWN_CELL_TYPE,) + tuple(seen))

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, name: Optional[str]) -> int:
        """Index for a name; unseen or missing names map to the unknown bucket."""
        if name is None:
            return 0
        try:
            return self.classes.index(name.strip().lower())
        except ValueError:
            return 0


class CellTypeEncoder(nn.Module):
    """One-hot cell type -> affine projection to the shared space."""

    def __init__(self, num_types: int, embed_dim: int):
        super().__init__()
        self.num_types = num_types
        self.proj = nn.Linear(num_types, embed_dim)

    def forward(self, indices: torch.Tensor) -> torch.Tensor:
        """Embed a ``(B,)`` LongTensor of vocabulary indices to ``(B, E)``."""
        if indices.numel() and (indices.min() < 0 or indices.max() >= self.num_types):
            bad = indices[(indices < 0) | (indices >= self.num_types)][0].item()
            raise UnknownCellType(bad, self.num_types)
        onehot = F.one_hot(indices, num_classes=self.num_types).float()
        return self.proj(onehot)


def caption_tokens(text: str) -> list[str]:
    """Lowercased alphanumeric runs of the caption."""
    return _TOKEN_RE.findall(text.lower())


class CaptionEncoder(nn.Module):
    """Hashed bag-of-token-embeddings caption encoder.

    Tokens hash (crc32, stable across runs) into ``num_buckets`` learned
    embeddings; the caption embedding is their mean, affinely projected
    to the shared space. Identical text always yields identical output
    in eval mode.
    """

    def __init__(self, embed_dim: int, num_buckets: int = 512, token_dim: int = 64):
        super().__init__()
        self.num_buckets = num_buckets
        self.embeddings = nn.Embedding(num_buckets, token_dim)
        self.proj = nn.Linear(token_dim, embed_dim)

    def bucket(self, token: str) -> int:
        return zlib.crc32(token.encode("utf-8")) % self.num_buckets

    def forward(self, text: str) -> torch.Tensor:
        """Embed one caption to an ``(E,)`` vector."""
        if not text or not text.strip():
            raise EmptyInput("caption text is empty")
        tokens = caption_tokens(text)
        if not tokens:
            raise EmptyInput(f"caption {text!r} has no encodable tokens")
        idx = torch.tensor([self.bucket(t) for t in tokens], dtype=torch.long,
                           device=self.embeddings.weight.device)
        return self.proj(self.embeddings(idx).mean(dim=0))


def fuse(
    tissue_emb: torch.Tensor,
    cell_emb: torch.Tensor,
    caption_emb: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Element-wise sum of the available branch embeddings."""
    fused = tissue_emb + cell_emb
    if caption_emb is not None:
        fused = fused + caption_emb
    return fused
