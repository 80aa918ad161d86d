"""Model components: tiling, token encoders, attention pooling, heads."""

from .attention import GatedAttentionPool
from .context import CaptionEncoder, CellTypeEncoder, CellTypeVocabulary, fuse
from .encoder import (
    ENCODER_PRESETS,
    EncoderConfig,
    PatchGrid,
    TinyTransformerEncoder,
    TokenProjection,
    build_encoder,
    build_encoder_config,
    tile_image,
)
from .network import IHCNetwork, NetworkConfig, PredictionSet, multitask_loss

__all__ = [
    "ENCODER_PRESETS",
    "CaptionEncoder",
    "CellTypeEncoder",
    "CellTypeVocabulary",
    "EncoderConfig",
    "GatedAttentionPool",
    "IHCNetwork",
    "NetworkConfig",
    "PatchGrid",
    "PredictionSet",
    "TinyTransformerEncoder",
    "TokenProjection",
    "build_encoder",
    "build_encoder_config",
    "fuse",
    "multitask_loss",
    "tile_image",
]
