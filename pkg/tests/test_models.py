"""Tests for Pydantic models."""

import pytest
from pydantic import ValidationError

from src.lccs_adapt.models.architecture import ArchitectureSpec
from src.lccs_adapt.models.domain import DomainSpec, StreamPolicy
from src.lccs_adapt.models.experiment import AdaptationConfig, DataConfig, ExperimentConfig, TrainingConfig
from src.lccs_adapt.models.optimizer import OptimizerConfig
from src.lccs_adapt.models.results import ResultRecord


class TestArchitectureSpec:
    """Test architecture validation."""

    def test_defaults(self):
        arch = ArchitectureSpec()
        assert arch.kind == "convnet"
        assert arch.feature_dim == 16

    def test_convnet_needs_image_input(self):
        with pytest.raises(ValidationError):
            ArchitectureSpec(kind="convnet", input_shape=[192])

    def test_convnet_input_too_small(self):
        """Three valid 3x3 convolutions shrink a 6x6 image to nothing."""
        with pytest.raises(ValidationError):
            ArchitectureSpec(input_shape=[3, 6, 6], widths=[4, 4, 4])

    def test_mlp_needs_flat_input(self):
        with pytest.raises(ValidationError):
            ArchitectureSpec(kind="mlp", input_shape=[3, 8, 8])

    def test_empty_widths(self):
        with pytest.raises(ValidationError):
            ArchitectureSpec(widths=[])


class TestDomainSpec:
    """Test domain descriptors."""

    def test_moment_lengths_follow_channels(self):
        with pytest.raises(ValidationError):
            DomainSpec(scale=[1.0, 1.0], shift=[0.0, 0.0, 0.0])

    def test_scale_must_be_positive(self):
        with pytest.raises(ValidationError):
            DomainSpec(scale=[1.0, 0.0, 1.0])

    def test_single_channel(self):
        spec = DomainSpec(image_shape=(1, 4, 4), scale=[2.0], shift=[0.5])
        assert spec.image_shape == (1, 4, 4)


class TestStreamPolicy:
    """Test stream descriptors."""

    def test_order_label(self):
        assert StreamPolicy().order_label == "shuffled"
        assert StreamPolicy(ordering="sequential_by_class").order_label == "by-class"

    def test_alpha_below_one(self):
        with pytest.raises(ValidationError):
            StreamPolicy(imbalance_alpha=0.5)


class TestConfigs:
    """Test configuration behavior shared by every model."""

    def test_extra_fields_forbidden(self):
        with pytest.raises(ValidationError):
            OptimizerConfig(learning_rate=0.1)

    def test_assignment_is_validated(self):
        cfg = OptimizerConfig()
        with pytest.raises(ValidationError):
            cfg.lr = -1.0

    def test_digest_is_stable(self):
        assert OptimizerConfig(lr=0.1).digest() == OptimizerConfig(lr=0.1).digest()
        assert OptimizerConfig(lr=0.1).digest() != OptimizerConfig(lr=0.2).digest()
        assert len(OptimizerConfig().digest()) == 12

    def test_online_strategies(self):
        assert AdaptationConfig(strategy="tent").online
        assert not AdaptationConfig(strategy="lccs").online

    def test_experiment_json_round_trip(self):
        config = ExperimentConfig(
            data=DataConfig(num_classes=4),
            training=TrainingConfig(architecture=ArchitectureSpec(num_classes=4)),
            streams=[StreamPolicy(batch_size=1), StreamPolicy(ordering="sequential_by_class")],
        )
        restored = ExperimentConfig.model_validate_json(config.model_dump_json())
        assert restored == config
        assert restored.digest() == config.digest()

    def test_explicit_invariance_opt_out(self):
        config = ExperimentConfig(assert_stream_invariance=False)
        assert not config.checks_invariance


class TestResultRecord:
    """Test result rows."""

    def test_value_range(self):
        with pytest.raises(ValidationError):
            ResultRecord(strategy="lccs", k=1, n=1, stream_batch=1, stream_order="shuffled", alpha=1.0,
                         metric="accuracy", value=1.5, seed=0, secs=0.0, config_digest="x")

    def test_unknown_metric(self):
        with pytest.raises(ValidationError):
            ResultRecord(strategy="lccs", k=1, n=1, stream_batch=1, stream_order="shuffled", alpha=1.0,
                         metric="auc", value=0.5, seed=0, secs=0.0, config_digest="x")
