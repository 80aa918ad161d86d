"""Gated attention pooling: weight properties and a numpy oracle."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from ihckit.exceptions import EmptyInput
from ihckit.model.attention import GatedAttentionPool


def numpy_pool(tokens, v, u, w):
    """Independent oracle for the gated-attention forward pass."""
    gated = np.tanh(tokens @ v.T) * (1.0 / (1.0 + np.exp(-(tokens @ u.T))))
    scores = gated @ w.T  # (N, 1)
    scores = scores[:, 0]
    shifted = scores - scores.max()
    exp = np.exp(shifted)
    weights = exp / exp.sum()
    pooled = (weights[:, None] * tokens).sum(axis=0)
    return pooled, weights


@pytest.fixture()
def pool():
    torch.manual_seed(7)
    return GatedAttentionPool(embed_dim=16)


class TestWeights:
    def test_single_token_weight_is_one(self, pool):
        tokens = torch.randn(1, 16)
        _, weights = pool(tokens)
        assert weights.shape == (1,)
        assert torch.allclose(weights, torch.ones(1))

    def test_identical_tokens_uniform(self, pool):
        token = torch.randn(1, 16)
        tokens = token.expand(9, 16).clone()
        pooled, weights = pool(tokens)
        assert torch.allclose(weights, torch.full((9,), 1 / 9))
        assert torch.allclose(pooled, token[0], atol=1e-6)

    def test_sum_to_one_and_nonnegative(self, pool):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(1, 64))
            tokens = torch.from_numpy(rng.standard_normal((n, 16))).float()
            _, weights = pool(tokens)
            assert torch.all(weights >= 0)
            assert abs(weights.sum().item() - 1.0) < 1e-6

    def test_permutation_invariance(self, pool):
        rng = np.random.default_rng(4)
        tokens = torch.from_numpy(rng.standard_normal((12, 16))).float()
        perm = torch.from_numpy(rng.permutation(12))
        pooled_a, weights_a = pool(tokens)
        pooled_b, weights_b = pool(tokens[perm])
        assert torch.allclose(pooled_a, pooled_b, atol=1e-6)
        assert torch.allclose(weights_a[perm], weights_b, atol=1e-6)

    def test_output_in_convex_hull_coordinatewise(self, pool):
        tokens = torch.randn(10, 16)
        pooled, _ = pool(tokens)
        lo, _ = tokens.min(dim=0)
        hi, _ = tokens.max(dim=0)
        assert torch.all(pooled >= lo - 1e-6)
        assert torch.all(pooled <= hi + 1e-6)


class TestOracle:
    def test_matches_numpy(self, pool):
        rng = np.random.default_rng(9)
        tokens_np = rng.standard_normal((5, 16))
        tokens = torch.from_numpy(tokens_np).float()
        v = pool.gate_v.weight.detach().numpy().astype(np.float64)
        u = pool.gate_u.weight.detach().numpy().astype(np.float64)
        w = pool.score.weight.detach().numpy().astype(np.float64)
        want_pooled, want_weights = numpy_pool(tokens_np, v, u, w)
        pooled, weights = pool(tokens)
        np.testing.assert_allclose(pooled.detach().numpy(), want_pooled, atol=1e-5)
        np.testing.assert_allclose(weights.detach().numpy(), want_weights, atol=1e-6)


class TestBatch:
    def test_batch_matches_per_set(self, pool):
        tokens = torch.randn(3, 7, 16)
        pooled, weights = pool(tokens)
        assert pooled.shape == (3, 16)
        assert weights.shape == (3, 7)
        for b in range(3):
            single_pooled, single_weights = pool(tokens[b])
            assert torch.allclose(pooled[b], single_pooled, atol=1e-6)
            assert torch.allclose(weights[b], single_weights, atol=1e-6)

    def test_batch_weights_sum_per_row(self, pool):
        tokens = torch.randn(4, 11, 16)
        _, weights = pool(tokens)
        assert torch.allclose(weights.sum(dim=-1), torch.ones(4), atol=1e-6)


class TestValidation:
    def test_empty_set(self, pool):
        with pytest.raises(EmptyInput):
            pool(torch.zeros(0, 16))

    def test_wrong_embed_dim(self, pool):
        with pytest.raises(ValueError, match="embed_dim"):
            pool(torch.zeros(4, 8))

    def test_wrong_rank(self, pool):
        with pytest.raises(ValueError, match="shape"):
            pool(torch.zeros(16))
