"""Slide-level immunohistochemistry scoring toolkit.

Curation of stained-image datasets into tar shards, a multi-head
attention-pooling classifier over image patches with tissue/cell-type
context, training and evaluation (calibration, ordinal reports,
bootstrap intervals), perturbation robustness sweeps, and a two-phase
reader-study service with its analysis pipeline.
"""

from .estimator import IHCScorer, check_is_fitted, check_records
from .exceptions import IHCKitError
from .metrics import (
    MetricsReport,
    accuracy,
    bootstrap_ci,
    confusion_matrix,
    evaluate_task,
    expected_calibration_error,
    ordinal_report,
    paired_bootstrap_pvalue,
    paired_ttest,
)
from .records import DatasetSplit, Foreground, IHCRecord
from .robustness import cutout, perturb, robustness_sweep, salt_pepper
from .synthetic import toy_corpus
from .train import Checkpoint, TrainConfig, predict_batch, train
from .vocab import (
    ALL_TASKS,
    PRIMARY_TASKS,
    TaskId,
    VocabularyRegistry,
    default_registry,
    load_registry,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_TASKS",
    "Checkpoint",
    "DatasetSplit",
    "Foreground",
    "IHCKitError",
    "IHCRecord",
    "IHCScorer",
    "MetricsReport",
    "PRIMARY_TASKS",
    "TaskId",
    "TrainConfig",
    "VocabularyRegistry",
    "accuracy",
    "bootstrap_ci",
    "check_is_fitted",
    "check_records",
    "confusion_matrix",
    "cutout",
    "default_registry",
    "evaluate_task",
    "expected_calibration_error",
    "load_registry",
    "ordinal_report",
    "paired_bootstrap_pvalue",
    "paired_ttest",
    "perturb",
    "predict_batch",
    "robustness_sweep",
    "salt_pepper",
    "toy_corpus",
    "train",
    "__version__",
]
