"""Gated attention pooling over token sets.

Pools a variable-length set of token embeddings into one vector by
scoring each token with a multiplicative tanh/sigmoid gate and taking
the softmax-weighted sum. The softmax runs over the full concatenated
token set, so tokens compete across patches, not within them.
"""

from __future__ import annotations

import torch
from torch import nn

from ..exceptions import EmptyInput


class GatedAttentionPool(nn.Module):
    """Weighted-sum pooling with learned per-token importance.

    For each token ``h_k`` the score is ``w^T (tanh(V h_k) * sigmoid(U h_k))``;
    weights are the softmax of scores over the whole set and the output is
    the weighted sum of the tokens.

    Parameters
    ----------
    embed_dim : int
        Dimension E of the incoming tokens and the pooled output.
    """

    def __init__(self, embed_dim: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.gate_v = nn.Linear(embed_dim, embed_dim, bias=False)
        self.gate_u = nn.Linear(embed_dim, embed_dim, bias=False)
        self.score = nn.Linear(embed_dim, 1, bias=False)

    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Pool ``(N, E)`` or ``(B, N, E)`` tokens.

        Returns
        -------
        (embedding, weights)
            ``(E,)`` and ``(N,)`` for a single set, ``(B, E)`` and
            ``(B, N)`` for a batch. Weights are nonnegative and sum to 1
            along the token axis.
        """
        if tokens.dim() not in (2, 3):
            raise ValueError(f"expected (N, E) or (B, N, E) tokens, got shape {tuple(tokens.shape)}")
        if tokens.shape[-2] == 0:
            raise EmptyInput("cannot pool an empty token set")
        if tokens.shape[-1] != self.embed_dim:
            raise ValueError(f"token dim {tokens.shape[-1]} != embed_dim {self.embed_dim}")
        gated = torch.tanh(self.gate_v(tokens)) * torch.sigmoid(self.gate_u(tokens))
        scores = self.score(gated).squeeze(-1)  # (N,) or (B, N)
        weights = torch.softmax(scores, dim=-1)
        pooled = (weights.unsqueeze(-1) * tokens).sum(dim=-2)
        return pooled, weights
