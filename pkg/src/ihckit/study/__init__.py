"""Two-phase reader-study backend: config, event log, analyses, HTTP service."""

from .analysis import (
    InfluenceBreakdown,
    ai_influence,
    mean_pairwise_agreement,
    mean_pairwise_kappa,
    pairwise_kappas,
    study_report,
)
from .events import EventLog, StudyConfig, StudyEvent, StudyImage, load_study_config
from .service import StudyService, create_app

__all__ = [
    "EventLog",
    "InfluenceBreakdown",
    "StudyConfig",
    "StudyEvent",
    "StudyImage",
    "StudyService",
    "ai_influence",
    "create_app",
    "load_study_config",
    "mean_pairwise_agreement",
    "mean_pairwise_kappa",
    "pairwise_kappas",
    "study_report",
]
