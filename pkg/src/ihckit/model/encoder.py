"""Image tiling and per-patch token encoders.

Images are tiled row-major into non-overlapping square patches, padding
the right/bottom edges with white so partial tiles are kept. Each patch
is encoded independently into a ``(T, D)`` token matrix; a shared linear
projection then maps tokens into the ``E``-dimensional pooling space.

Encoder backends are pluggable by name. The default ``tiny`` backend is
a small trainable transformer; the ``full`` preset records the token
geometry of a 336-px ViT-L backbone (24x24 spatial tokens + CLS) for
configs that plug in such an encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..exceptions import DimensionMismatch, EmptyForeground, EmptyInput, EncoderUnavailable

PATCH_SIZE = 336
CELL_PX = 8  # each spatial token summarizes an 8x8 cell of the pooled patch


@dataclass(frozen=True)
class PatchGrid:
    """Row-major tiling of one image."""

    patches: np.ndarray  # (K, P, P, 3) uint8
    coords: tuple[tuple[int, int], ...]  # (row, col) per patch
    original_size: tuple[int, int]  # (H, W) before padding
    padded_size: tuple[int, int]  # (H', W') after padding

    def __len__(self) -> int:
        return len(self.patches)


def tile_image(
    image,
    patch_size: int = PATCH_SIZE,
    mask: Optional[np.ndarray] = None,
    skip_empty: bool = False,
) -> PatchGrid:
    """Tile an H x W x 3 image into non-overlapping patches.

    Right and bottom edges are padded with white (255) up to the next
    multiple of ``patch_size``, so every pixel lands in exactly one
    patch and the patch count is ``ceil(H/P) * ceil(W/P)``.

    With ``skip_empty=True`` and a boolean foreground ``mask``, tiles
    whose mask coverage is zero are dropped (the count invariant then no
    longer holds); dropping every tile raises :class:`EmptyForeground`.
    """
    arr = np.asarray(image)
    if arr.size == 0:
        raise EmptyInput("cannot tile an empty image")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {arr.shape}")
    arr = arr[..., :3]
    h, w = arr.shape[:2]
    rows = math.ceil(h / patch_size)
    cols = math.ceil(w / patch_size)
    padded_hw = (rows * patch_size, cols * patch_size)
    padded = np.full(padded_hw + (3,), 255, dtype=arr.dtype)
    padded[:h, :w] = arr
    patches = (
        padded.reshape(rows, patch_size, cols, patch_size, 3)
        .swapaxes(1, 2)
        .reshape(rows * cols, patch_size, patch_size, 3)
    )
    coords = tuple((r, c) for r in range(rows) for c in range(cols))
    if skip_empty and mask is not None:
        padded_mask = np.zeros(padded_hw, dtype=bool)
        padded_mask[:h, :w] = mask
        tiles = (
            padded_mask.reshape(rows, patch_size, cols, patch_size)
            .swapaxes(1, 2)
            .reshape(rows * cols, -1)
        )
        keep = tiles.any(axis=1)
        if not keep.any():
            raise EmptyForeground("foreground mask selects no tiles")
        patches = patches[keep]
        coords = tuple(c for c, k in zip(coords, keep) if k)
    return PatchGrid(patches=patches, coords=coords, original_size=(h, w), padded_size=padded_hw)


@dataclass(frozen=True)
class EncoderConfig:
    """Geometry of a token encoder: grid x grid spatial tokens + 1 CLS."""

    name: str = "tiny"
    patch_size: int = PATCH_SIZE
    grid: int = 4
    token_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 256

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid + 1


ENCODER_PRESETS = {
    "tiny": EncoderConfig(name="tiny"),
    "full": EncoderConfig(
        name="full", grid=24, token_dim=1024, num_layers=2, num_heads=8, ffn_dim=2048
    ),
}


class TinyTransformerEncoder(nn.Module):
    """Small trainable ViT-style patch encoder.

    The patch is average-pooled to ``(grid * 8) ** 2`` pixels, cut into a
    ``grid x grid`` board of 8x8 RGB cells, each cell linearly embedded to
    ``token_dim``; a learnable CLS token and positional embeddings are
    added before a standard transformer encoder stack. Dropout is zero,
    so eval-mode outputs are deterministic.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        cell_values = CELL_PX * CELL_PX * 3
        self.cell_embed = nn.Linear(cell_values, config.token_dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, config.token_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.num_tokens, config.token_dim))
        nn.init.normal_(self.cls_token, std=0.02)
        nn.init.normal_(self.pos_embed, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=config.token_dim,
            nhead=config.num_heads,
            dim_feedforward=config.ffn_dim,
            dropout=0.0,
            batch_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, num_layers=config.num_layers)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        """Encode ``(B, P, P, 3)`` patches to ``(B, T, D)`` tokens."""
        if patches.dim() != 4 or patches.shape[-1] != 3:
            raise ValueError(f"expected (B, P, P, 3) patches, got shape {tuple(patches.shape)}")
        x = patches.float()
        if patches.dtype == torch.uint8:
            x = x / 255.0
        x = x.permute(0, 3, 1, 2)  # (B, 3, P, P)
        g = self.config.grid
        x = F.adaptive_avg_pool2d(x, g * CELL_PX)
        b = x.shape[0]
        x = (
            x.reshape(b, 3, g, CELL_PX, g, CELL_PX)
            .permute(0, 2, 4, 1, 3, 5)
            .reshape(b, g * g, 3 * CELL_PX * CELL_PX)
        )
        tokens = self.cell_embed(x)
        cls = self.cls_token.expand(b, -1, -1)
        tokens = torch.cat([cls, tokens], dim=1) + self.pos_embed
        return self.blocks(tokens)


_BACKENDS = {"tiny": TinyTransformerEncoder, "full": TinyTransformerEncoder}


def build_encoder(name: str = "tiny", **overrides) -> TinyTransformerEncoder:
    """Instantiate an encoder backend by preset name.

    ``overrides`` patch individual :class:`EncoderConfig` fields. Unknown
    names raise :class:`EncoderUnavailable` (there is no implicit
    download of pretrained weights).
    """
    if name not in _BACKENDS or name not in ENCODER_PRESETS:
        raise EncoderUnavailable(
            f"no encoder backend named {name!r}; available: {sorted(_BACKENDS)}"
        )
    config = ENCODER_PRESETS[name]
    if overrides:
        config = replace(config, **overrides)
    return _BACKENDS[name](config)


def build_encoder_config(name: str = "tiny", **overrides) -> EncoderConfig:
    """Look up a preset :class:`EncoderConfig` without instantiating it."""
    if name not in ENCODER_PRESETS:
        raise EncoderUnavailable(
            f"no encoder preset named {name!r}; available: {sorted(ENCODER_PRESETS)}"
        )
    config = ENCODER_PRESETS[name]
    return replace(config, **overrides) if overrides else config


class TokenProjection(nn.Module):
    """Affine map (D -> E) shared across all tokens and patches."""

    def __init__(self, token_dim: int, embed_dim: int):
        super().__init__()
        self.token_dim = token_dim
        self.linear = nn.Linear(token_dim, embed_dim)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.shape[-1] != self.token_dim:
            raise DimensionMismatch(
                f"token dim {tokens.shape[-1]} does not match projection input {self.token_dim}"
            )
        return self.linear(tokens)
