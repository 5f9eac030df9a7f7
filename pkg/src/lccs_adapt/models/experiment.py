"""Experiment configuration models."""

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import Field, model_validator

from .architecture import ArchitectureSpec
from .base import BaseLCCSModel
from .domain import StreamPolicy
from .optimizer import OptimizerConfig

Strategy = Literal[
    "none", "lccs", "adabn", "testtime_bn", "tent", "finetune_bn", "finetune_classifier", "ncc",
]
Metric = Literal["accuracy", "macro_f1", "avg_per_class_accuracy", "avg_precision"]

ONLINE_STRATEGIES = ("testtime_bn", "tent")
# Default Adam step of Tent, one step per stream batch.
TENT_LR = 0.01


class DataConfig(BaseLCCSModel):
    """Synthetic source / target data."""
    preset: Literal["moment_shift", "warped_shift"] = Field(default="moment_shift", description="Domain-shift preset")
    num_classes: int = Field(default=7, ge=2, description="Number of classes K")
    source_train_size: int = Field(default=1400, ge=2, description="Source training samples")
    source_test_size: int = Field(default=700, ge=2, description="Held-out source samples")
    target_pool_size: int = Field(default=1400, ge=2, description="Target samples support sets are drawn from")
    target_test_size: int = Field(default=1400, ge=2, description="Target evaluation samples")
    structure_seed: int = Field(default=0, ge=0, description="Seed shared by all domains of one task")


class TrainingConfig(BaseLCCSModel):
    """Source-model training by empirical risk minimization."""
    architecture: ArchitectureSpec = Field(default_factory=ArchitectureSpec)
    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=64, ge=2)
    optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(kind="adam", lr=0.01))
    augment_noise: float = Field(default=0.0, ge=0, description="Std of additive Gaussian jitter")


class AdaptationConfig(BaseLCCSModel):
    """Adaptation strategy and its hyperparameters."""
    strategy: Strategy = Field(default="lccs")
    k: int = Field(default=1, ge=1, description="Support samples per class")
    n: Optional[int] = Field(default=None, ge=1, description="Spanning-vector count; None applies n_policy")
    n_policy: Literal["auto", "explained_variance"] = Field(default="auto")
    explained_variance: float = Field(default=0.9, gt=0, le=1)
    m_epochs: int = Field(default=10, ge=0, description="EMA epochs and gradient epochs")
    grid_steps: int = Field(default=11, ge=2, description="Grid points in [0, 1]")
    grid_objective: Literal["cross_entropy", "entropy"] = Field(default="cross_entropy")
    greedy_init: bool = Field(default=False, description="Layer-wise instead of tied grid search")
    init_stage: bool = Field(default=True)
    gradient_stage: bool = Field(default=True)
    convex: bool = Field(default=False, description="Project coefficients to the simplex")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    batch_size: int = Field(default=32, ge=1)
    classifier: Literal["auto", "source", "finetuned", "ncc"] = Field(default="auto")
    finetune_epochs: int = Field(default=10, ge=0)
    ema_momentum: float = Field(default=0.1, ge=0, le=1)
    augment_noise: float = Field(default=0.0, ge=0)
    adabn_data: Literal["support", "target"] = Field(default="support")
    tent_optimizer: OptimizerConfig = Field(
        default_factory=lambda: OptimizerConfig(lr=TENT_LR),
        description="Optimizer of the online entropy updates",
    )
    testtime_blend: float = Field(default=1.0, ge=0, le=1)

    @property
    def online(self) -> bool:
        return self.strategy in ONLINE_STRATEGIES


class ExperimentConfig(BaseLCCSModel):
    """Everything needed to reproduce one experiment, across seeds."""
    name: str = Field(default="experiment")
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    data: DataConfig = Field(default_factory=DataConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    adaptation: AdaptationConfig = Field(default_factory=AdaptationConfig)
    streams: List[StreamPolicy] = Field(default_factory=lambda: [StreamPolicy()], min_length=1)
    metrics: List[Metric] = Field(default_factory=lambda: ["accuracy"], min_length=1)
    assert_stream_invariance: Optional[bool] = Field(
        default=None, description="Check per-sample invariance across streams; defaults to on for offline strategies"
    )
    report_path: Optional[Path] = Field(default=None)
    report_format: Literal["csv", "jsonl"] = Field(default="csv")

    @model_validator(mode="after")
    def check_invariance_request(self) -> "ExperimentConfig":
        if self.assert_stream_invariance and self.adaptation.online:
            raise ValueError(
                f"strategy {self.adaptation.strategy!r} adapts on the stream; "
                "its predictions cannot be asserted stream-invariant"
            )
        if self.training.architecture.num_classes != self.data.num_classes:
            raise ValueError("architecture.num_classes must equal data.num_classes")
        return self

    @property
    def checks_invariance(self) -> bool:
        if self.assert_stream_invariance is None:
            return not self.adaptation.online
        return self.assert_stream_invariance
