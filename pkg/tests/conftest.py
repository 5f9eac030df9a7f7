"""Pytest configuration and fixtures."""

import os

import numpy as np
import pytest

from src.lccs_adapt.config.settings import get_settings, reset_settings
from src.lccs_adapt.data.sampling import sample_support
from src.lccs_adapt.data.synthetic import domain_pair, gen_dataset
from src.lccs_adapt.models.architecture import ArchitectureSpec
from src.lccs_adapt.models.domain import StreamPolicy
from src.lccs_adapt.models.experiment import AdaptationConfig, DataConfig, ExperimentConfig, TrainingConfig
from src.lccs_adapt.models.optimizer import OptimizerConfig
from src.lccs_adapt.nn.network import build_network
from src.lccs_adapt.nn.training import train_source


def randomize_statistics(model, seed: int = 0):
    """Give every batch-norm layer non-trivial running stats and affine params."""
    rng = np.random.default_rng(seed)
    for layer in model.bn_layers:
        layer.set_statistics(rng.normal(0.0, 0.5, layer.channels), rng.uniform(0.5, 1.5, layer.channels))
        layer.gamma.assign(rng.uniform(0.5, 1.5, layer.channels))
        layer.beta.assign(rng.normal(0.0, 0.1, layer.channels))
    return model


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test starts from default settings, whatever the shell exports."""
    for key in list(os.environ):
        if key.upper().startswith("LCCS_"):
            monkeypatch.delenv(key, raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def settings():
    return get_settings()


@pytest.fixture
def conv_arch():
    """Two conv blocks on 3x8x8 images, three classes."""
    return ArchitectureSpec(kind="convnet", input_shape=[3, 8, 8], widths=[4, 6], num_classes=3)


@pytest.fixture
def mlp_arch():
    return ArchitectureSpec(kind="mlp", input_shape=[192], widths=[8, 8], num_classes=3)


@pytest.fixture
def conv_model(conv_arch):
    return randomize_statistics(build_network(conv_arch, seed=0))


@pytest.fixture
def mlp_model(mlp_arch):
    return randomize_statistics(build_network(mlp_arch, seed=0))


@pytest.fixture
def domains():
    """(source, target) specs of the moment-shift preset with three classes."""
    return domain_pair("moment_shift", num_classes=3)


@pytest.fixture
def source_data(domains):
    return gen_dataset(domains[0], 60, seed=1)


@pytest.fixture
def target_data(domains):
    return gen_dataset(domains[1], 60, seed=2)


@pytest.fixture
def support(target_data):
    """Two labelled target samples per class."""
    return sample_support(target_data, k=2, seed=0)


@pytest.fixture(scope="session")
def trained_model():
    """A convnet trained on the moment-shift source domain, shared across tests."""
    source, _ = domain_pair("moment_shift", num_classes=3)
    arch = ArchitectureSpec(kind="convnet", input_shape=[3, 8, 8], widths=[6, 8], num_classes=3)
    train = gen_dataset(source, 210, seed=11)
    return train_source(build_network(arch, seed=0), train, epochs=15, optimizer_cfg=OptimizerConfig(lr=0.01),
                        seed=0, batch_size=32)


@pytest.fixture
def tiny_config():
    """Factory for a fast end-to-end experiment config."""

    def build(**adaptation) -> ExperimentConfig:
        return ExperimentConfig(
            name="tiny",
            seeds=[0],
            data=DataConfig(num_classes=3, source_train_size=90, source_test_size=30,
                            target_pool_size=60, target_test_size=60),
            training=TrainingConfig(
                architecture=ArchitectureSpec(input_shape=[3, 8, 8], widths=[4, 6], num_classes=3),
                epochs=2,
                batch_size=32,
            ),
            adaptation=AdaptationConfig(m_epochs=2, **adaptation),
            streams=[
                StreamPolicy(batch_size=8),
                StreamPolicy(batch_size=13, ordering="sequential_by_class"),
                StreamPolicy(batch_size=60, seed=3),
            ],
        )

    return build


@pytest.fixture
def finite_difference():
    """Central-difference gradient of a scalar function of one array."""

    def estimate(objective, values, step: float = 1e-5) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        grad = np.zeros_like(values)
        for index in np.ndindex(values.shape):
            plus, minus = values.copy(), values.copy()
            plus[index] += step
            minus[index] -= step
            grad[index] = (objective(plus) - objective(minus)) / (2 * step)
        return grad

    return estimate


@pytest.fixture
def randomize():
    return randomize_statistics
