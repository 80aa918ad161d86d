"""Estimator-style front end: ``fit`` / ``predict`` / ``get_params``.

``IHCScorer`` wraps the training loop and checkpointing behind the
conventional estimator protocol so it can slot into pipelines and
grid-search helpers that expect that shape. Labels travel on the
records themselves, so ``y`` is accepted but must be ``None``.
"""

from __future__ import annotations

import inspect
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import EmptyInput, NotFitted
from .model.encoder import ENCODER_PRESETS, EncoderConfig, build_encoder_config
from .records import IHCRecord
from .train import Checkpoint, TrainConfig, predict_batch, train
from .vocab import ALL_TASKS, TaskId, VocabularyRegistry, default_registry


def check_records(records, require_labels: bool = True) -> list[IHCRecord]:
    """Validate and materialize an iterable of records."""
    out = list(records)
    if not out:
        raise EmptyInput("no records provided")
    for idx, record in enumerate(out):
        if not isinstance(record, IHCRecord):
            raise TypeError(
                f"records[{idx}] is {type(record).__name__}, expected IHCRecord"
            )
        if record.image_ref is None:
            raise ValueError(f"records[{idx}] has no image data attached")
        if require_labels:
            missing = [t.value for t in ALL_TASKS if t not in record.labels]
            if missing:
                raise ValueError(f"records[{idx}] missing labels for {missing}")
    return out


def check_is_fitted(estimator, attribute: str = "checkpoint_") -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFitted(
            f"{type(estimator).__name__} instance is not fitted yet; call fit first"
        )


class IHCScorer:
    """Multi-head slide scorer with an estimator-protocol surface.

    Parameters mirror :class:`~ihckit.train.TrainConfig`; ``encoder``
    is a preset name (``"tiny"`` or ``"full"``). ``fit`` trains from
    scratch, ``predict`` returns per-task class indices, and
    ``predict_proba`` returns per-task probability matrices.
    """

    def __init__(
        self,
        learning_rate: float = 1e-6,
        weight_decay: float = 1e-5,
        epochs: int = 1,
        batch_size: int = 2,
        seed: int = 0,
        caption_probability: float = 0.5,
        encoder: str = "tiny",
        embed_dim: int = 128,
    ):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.caption_probability = caption_probability
        self.encoder = encoder
        self.embed_dim = embed_dim
        self.checkpoint_: Optional[Checkpoint] = None

    # -- estimator protocol ----------------------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "IHCScorer":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, key, value)
        return self

    # -- fitting and inference ---------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            caption_probability=self.caption_probability,
            encoder=build_encoder_config(self.encoder),
            embed_dim=self.embed_dim,
        )

    def fit(self, records: Iterable[IHCRecord], y=None) -> "IHCScorer":
        if y is not None:
            raise ValueError("labels travel on the records; y must be None")
        records = check_records(records, require_labels=True)
        self.checkpoint_ = train(records, self._train_config())
        return self

    def predict(self, records: Iterable[IHCRecord]) -> dict[TaskId, np.ndarray]:
        check_is_fitted(self)
        records = check_records(records, require_labels=False)
        predictions = predict_batch(self.checkpoint_, records)
        return {
            task: np.array([p.index[task] for p in predictions], dtype=np.int64)
            for task in ALL_TASKS
        }

    def predict_proba(self, records: Iterable[IHCRecord]) -> dict[TaskId, np.ndarray]:
        check_is_fitted(self)
        records = check_records(records, require_labels=False)
        predictions = predict_batch(self.checkpoint_, records)
        return {
            task: np.stack([np.asarray(p.probs[task]) for p in predictions])
            for task in ALL_TASKS
        }

    def score(
        self,
        records: Iterable[IHCRecord],
        y=None,
        tasks: Sequence[TaskId] = ALL_TASKS,
    ) -> float:
        """Mean per-task accuracy over ``tasks`` (labels from the records)."""
        if y is not None:
            raise ValueError("labels travel on the records; y must be None")
        records = check_records(records, require_labels=True)
        predicted = self.predict(records)
        accuracies = [
            float(np.mean(predicted[task] == np.array([r.labels[task] for r in records])))
            for task in tasks
        ]
        return float(np.mean(accuracies))

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self)
        self.checkpoint_.save(path)

    @classmethod
    def load(cls, path, registry: VocabularyRegistry | None = None) -> "IHCScorer":
        checkpoint = Checkpoint.load(path)
        config = checkpoint.train_config
        estimator = cls(
            learning_rate=config.learning_rate,
            weight_decay=config.weight_decay,
            epochs=config.epochs,
            batch_size=config.batch_size,
            seed=config.seed,
            caption_probability=config.caption_probability,
            encoder=config.encoder.name,
            embed_dim=config.embed_dim,
        )
        estimator.checkpoint_ = checkpoint
        return estimator
