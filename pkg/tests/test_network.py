"""Multi-head network: shapes, loss, batching, and checkpoint round-trips."""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from ihckit.exceptions import MissingLabel, VocabularyMismatch
from ihckit.model.encoder import EncoderConfig
from ihckit.model.network import (
    IHCNetwork,
    NetworkConfig,
    PredictionSet,
    multitask_loss,
    per_task_losses,
)
from ihckit.train import Checkpoint, TrainConfig
from ihckit.vocab import ALL_TASKS, TaskId, default_registry

SMALL_ENCODER = EncoderConfig(name="tiny", patch_size=48, grid=2, token_dim=16,
                              num_layers=1, num_heads=2, ffn_dim=32)


@pytest.fixture(scope="module")
def registry():
    return default_registry()


@pytest.fixture()
def net(registry):
    torch.manual_seed(5)
    config = NetworkConfig(
        encoder=SMALL_ENCODER,
        embed_dim=24,
        caption_buckets=32,
        caption_token_dim=8,
        cell_classes=("<unk>", "tumor cells"),
    )
    return IHCNetwork(config, registry).eval()


def patch_stack(rng, k=2, p=48):
    return rng.integers(0, 256, size=(k, p, p, 3), dtype=np.uint8)


class TestHeads:
    def test_logit_widths(self, net, registry):
        rng = np.random.default_rng(0)
        logits = net([patch_stack(rng)], torch.tensor([0]))
        widths = {task: logits[task].shape for task in logits}
        assert widths[TaskId.INTENSITY] == (1, 4)
        assert widths[TaskId.LOCATION] == (1, 4)
        assert widths[TaskId.QUANTITY] == (1, 4)
        assert widths[TaskId.TISSUE] == (1, 58)
        assert widths[TaskId.MALIGNANCY] == (1, 2)
        assert set(logits) == set(ALL_TASKS)

    def test_head_count_matches_vocab(self, net, registry):
        for task in ALL_TASKS:
            head = net.heads[task.value]
            assert head.out_features == len(registry[task].classes)


class TestLoss:
    def test_uniform_logits_loss(self, registry):
        # all-zero logits make each head's cross-entropy ln(C)
        logits = {
            task: torch.zeros(3, len(registry[task].classes)) for task in ALL_TASKS
        }
        labels = {task: torch.zeros(3, dtype=torch.long) for task in ALL_TASKS}
        loss = multitask_loss(logits, labels)
        want = 3 * math.log(4) + math.log(58) + math.log(2)
        assert loss.item() == pytest.approx(want, abs=1e-6)
        assert want == pytest.approx(8.912473274466036, abs=1e-12)

    def test_missing_task_raises(self, registry):
        logits = {task: torch.zeros(1, len(registry[task].classes)) for task in ALL_TASKS}
        labels = {task: torch.zeros(1, dtype=torch.long) for task in ALL_TASKS}
        del logits[TaskId.QUANTITY]
        with pytest.raises(MissingLabel):
            multitask_loss(logits, labels)
        logits[TaskId.QUANTITY] = torch.zeros(1, 4)
        del labels[TaskId.MALIGNANCY]
        with pytest.raises(MissingLabel):
            per_task_losses(logits, labels)

    def test_per_task_sums_to_total(self, registry):
        torch.manual_seed(3)
        logits = {
            task: torch.randn(4, len(registry[task].classes)) for task in ALL_TASKS
        }
        labels = {task: torch.zeros(4, dtype=torch.long) for task in ALL_TASKS}
        total = multitask_loss(logits, labels).item()
        parts = per_task_losses(logits, labels)
        assert sum(parts.values()) == pytest.approx(total, abs=1e-5)


class TestEmbedding:
    def test_batch_matches_loop(self, net):
        rng = np.random.default_rng(1)
        stacks = [patch_stack(rng) for _ in range(3)]
        with torch.no_grad():
            batched = net.embed_images(stacks)
            looped = torch.stack([net.embed_image(s)[0] for s in stacks])
        assert torch.allclose(batched, looped, atol=1e-5)

    def test_ragged_batch(self, net):
        rng = np.random.default_rng(2)
        stacks = [patch_stack(rng, k=1), patch_stack(rng, k=3)]
        with torch.no_grad():
            out = net.embed_images(stacks)
        assert out.shape == (2, 24)

    def test_attention_weights_cover_all_tokens(self, net):
        rng = np.random.default_rng(3)
        stack = patch_stack(rng, k=2)
        with torch.no_grad():
            _, weights = net.embed_image(stack)
        # 2 patches x (2*2 grid + CLS) tokens
        assert weights.shape == (2 * 5,)
        assert weights.sum().item() == pytest.approx(1.0, abs=1e-6)


class TestCaptionGuard:
    def test_caption_branch_never_runs_without_mask(self, net, monkeypatch):
        def boom(text):
            raise AssertionError("caption branch must stay cold")

        monkeypatch.setattr(net.caption_encoder, "forward", boom)
        rng = np.random.default_rng(4)
        logits = net([patch_stack(rng)], torch.tensor([0]),
                     captions=["some caption"], caption_mask=None)
        assert set(logits) == set(ALL_TASKS)
        net.predict([patch_stack(rng)], torch.tensor([0]))

    def test_outputs_identical_with_or_without_caption_text(self, net):
        rng = np.random.default_rng(5)
        stack = patch_stack(rng)
        with torch.no_grad():
            a = net([stack], torch.tensor([1]), captions=None, caption_mask=None)
            b = net([stack], torch.tensor([1]),
                    captions=["Breast. Carcinoma. Antibody (gene): ESR1 for tumor cells"],
                    caption_mask=torch.tensor([False]))
        for task in ALL_TASKS:
            assert torch.equal(a[task], b[task])

    def test_caption_changes_logits_when_masked_in(self, net):
        rng = np.random.default_rng(6)
        stack = patch_stack(rng)
        with torch.no_grad():
            a = net([stack], torch.tensor([1]), captions=None, caption_mask=None)
            b = net([stack], torch.tensor([1]),
                    captions=["Breast. Carcinoma. Antibody (gene): ESR1 for tumor cells"],
                    caption_mask=torch.tensor([True]))
        assert any(not torch.equal(a[task], b[task]) for task in ALL_TASKS)


class TestPredictionSet:
    def test_from_probs_argmax_and_confidence(self):
        probs = {
            TaskId.INTENSITY: np.array([0.1, 0.2, 0.6, 0.1]),
            TaskId.MALIGNANCY: np.array([0.7, 0.3]),
        }
        pred = PredictionSet.from_probs(probs)
        assert pred.index[TaskId.INTENSITY] == 2
        assert pred.confidence[TaskId.INTENSITY] == pytest.approx(0.6)
        assert pred.index[TaskId.MALIGNANCY] == 0

    def test_to_json_uses_class_names(self, registry):
        probs = {TaskId.INTENSITY: np.array([0.1, 0.2, 0.6, 0.1])}
        data = PredictionSet.from_probs(probs).to_json(registry)
        assert data["intensity"]["class"] == "moderate"
        assert data["intensity"]["index"] == 2
        assert data["intensity"]["probs"] == pytest.approx([0.1, 0.2, 0.6, 0.1])

    def test_predict_rows_are_distributions(self, net):
        rng = np.random.default_rng(7)
        preds = net.predict([patch_stack(rng), patch_stack(rng)], torch.tensor([0, 1]))
        assert len(preds) == 2
        for pred in preds:
            for task in ALL_TASKS:
                p = pred.probs[task]
                assert p.sum() == pytest.approx(1.0, abs=1e-5)
                assert pred.index[task] == int(np.argmax(p))


class TestCheckpoint:
    def test_round_trip_bitwise(self, net, registry, tmp_path):
        config = TrainConfig(encoder=SMALL_ENCODER, embed_dim=24)
        ckpt = Checkpoint(
            state_dict=net.state_dict(),
            network_config=net.config,
            train_config=config,
            step=17,
            vocab_hashes={"labels": registry.content_hash(), "cell_types": "x"},
        )
        path = tmp_path / "model.pt"
        ckpt.save(path)
        loaded = Checkpoint.load(path)
        assert loaded.step == 17
        assert loaded.network_config == net.config
        assert loaded.train_config == config
        for key, tensor in net.state_dict().items():
            assert torch.equal(loaded.state_dict[key], tensor), key
        rebuilt = loaded.build_network(registry)
        rng = np.random.default_rng(8)
        stack = patch_stack(rng)
        with torch.no_grad():
            a = net([stack], torch.tensor([0]))
            b = rebuilt([stack], torch.tensor([0]))
        for task in ALL_TASKS:
            assert torch.equal(a[task], b[task])

    def test_vocab_mismatch_rejected(self, net, registry, tmp_path):
        ckpt = Checkpoint(
            state_dict=net.state_dict(),
            network_config=net.config,
            train_config=TrainConfig(encoder=SMALL_ENCODER, embed_dim=24),
            step=1,
            vocab_hashes={"labels": "0" * 32, "cell_types": "x"},
        )
        path = tmp_path / "model.pt"
        ckpt.save(path)
        with pytest.raises(VocabularyMismatch):
            Checkpoint.load(path).build_network(registry)

    def test_format_version_gate(self, net, registry, tmp_path):
        path = tmp_path / "model.pt"
        torch.save({"format_version": 99}, path)
        with pytest.raises(VocabularyMismatch, match="99"):
            Checkpoint.load(path)


class TestNetworkConfig:
    def test_json_round_trip(self):
        config = NetworkConfig(
            encoder=SMALL_ENCODER, embed_dim=24, cell_classes=("<unk>", "tumor cells")
        )
        assert NetworkConfig.from_json(config.to_json()) == config
