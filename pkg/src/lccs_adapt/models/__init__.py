"""Pydantic models for configuration, checkpoints and results."""

from .architecture import ArchitectureSpec
from .checkpoint import CHECKPOINT_FORMAT, CheckpointDocument
from .domain import DomainSpec, StreamPolicy
from .experiment import AdaptationConfig, DataConfig, ExperimentConfig, TrainingConfig
from .optimizer import OptimizerConfig
from .results import REPORT_COLUMNS, ResultRecord

__all__ = [
    "AdaptationConfig",
    "ArchitectureSpec",
    "CHECKPOINT_FORMAT",
    "CheckpointDocument",
    "DataConfig",
    "DomainSpec",
    "ExperimentConfig",
    "OptimizerConfig",
    "REPORT_COLUMNS",
    "ResultRecord",
    "StreamPolicy",
    "TrainingConfig",
]
