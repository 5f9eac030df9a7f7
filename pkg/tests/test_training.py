"""Tests for optimizers and source training."""

import numpy as np
import pytest

from src.lccs_adapt.autograd import ops
from src.lccs_adapt.autograd.tensor import Parameter, Tensor, backward
from src.lccs_adapt.data.datasets import LabeledDataset
from src.lccs_adapt.models.architecture import ArchitectureSpec
from src.lccs_adapt.models.optimizer import OptimizerConfig
from src.lccs_adapt.nn.checkpoint import save_checkpoint
from src.lccs_adapt.nn.network import build_network
from src.lccs_adapt.nn.optim import SGD, Adam, Optimizer, build_optimizer
from src.lccs_adapt.nn.training import train_source
from src.lccs_adapt.utils.errors import ContractError


def blobs(size: int = 200, seed: int = 0) -> LabeledDataset:
    """Two well separated Gaussian blobs in the plane."""
    rng = np.random.default_rng(seed)
    y = np.arange(size) % 2
    centers = np.where(y[:, None] == 0, -3.0, 3.0)
    return LabeledDataset(x=centers + 0.5 * rng.normal(size=(size, 2)), y=y, num_classes=2)


class TestOptimizers:
    """Test optimizer update rules."""

    def test_sgd_without_momentum(self):
        param = Parameter(np.array([1.0, 2.0]))
        param.grad = np.array([0.5, -1.0])
        SGD([param], lr=0.1, momentum=0.0).step()
        np.testing.assert_allclose(param.data, [0.95, 2.1], rtol=1e-15)

    def test_sgd_momentum_accumulates(self):
        param = Parameter(np.array([0.0]))
        optimizer = SGD([param], lr=0.1, momentum=0.9)
        for _ in range(2):
            param.grad = np.array([1.0])
            optimizer.step()
        assert param.data[0] == pytest.approx(-0.1 - 0.1 * 1.9)

    def test_adam_first_step_is_lr_times_sign(self):
        param = Parameter(np.array([1.0, 1.0]))
        param.grad = np.array([3.0, -0.2])
        Adam([param], lr=0.01).step()
        np.testing.assert_allclose(param.data, [0.99, 1.01], atol=1e-6)

    def test_zero_learning_rate_is_a_no_op(self):
        param = Parameter(np.array([1.5, -2.5]))
        param.grad = np.array([0.3, 0.7])
        Adam([param], lr=0.0).step()
        np.testing.assert_array_equal(param.data, [1.5, -2.5])

    def test_parameters_without_grad_are_skipped(self):
        param = Parameter(np.array([1.0]))
        SGD([param], lr=0.1).step()
        np.testing.assert_array_equal(param.data, [1.0])

    def test_rejects_empty_parameter_list(self):
        with pytest.raises(ContractError):
            Adam([], lr=0.1)

    def test_rejects_negative_learning_rate(self):
        with pytest.raises(ContractError):
            Optimizer([Parameter(np.zeros(1))], lr=-1.0)

    def test_build_optimizer(self):
        params = [Parameter(np.zeros(2))]
        assert isinstance(build_optimizer(OptimizerConfig(kind="adam"), params), Adam)
        sgd = build_optimizer(OptimizerConfig(kind="sgd", lr=0.5, momentum=0.5), params)
        assert isinstance(sgd, SGD)
        assert sgd.lr == 0.5

    def test_sgd_minimizes_quadratic(self):
        target = np.array([1.0, -2.0, 3.0])
        param = Parameter(np.zeros(3))
        optimizer = SGD([param], lr=0.1, momentum=0.0)
        for _ in range(200):
            loss = ops.sum_all(ops.square(ops.sub(param, Tensor(target))))
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
        np.testing.assert_allclose(param.data, target, atol=1e-8)


class TestTrainSource:
    """Test empirical-risk-minimization training."""

    def test_zero_epochs_returns_unchanged_copy(self, conv_model, source_data):
        trained = train_source(conv_model, source_data, epochs=0, optimizer_cfg=OptimizerConfig(), seed=0)
        assert trained is not conv_model
        assert all(layer.mode == "eval" for layer in trained.bn_layers)
        for (_, a), (_, b) in zip(conv_model.named_parameters(), trained.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_separable_blobs(self):
        arch = ArchitectureSpec(kind="mlp", input_shape=[2], widths=[8], num_classes=2)
        data = blobs()
        trained = train_source(build_network(arch), data, epochs=50, optimizer_cfg=OptimizerConfig(lr=0.01),
                               seed=0, batch_size=32)
        accuracy = float((trained.predict(data.x) == data.y).mean())
        assert accuracy >= 0.99

    def test_input_model_untouched(self, conv_model, source_data):
        before = [param.data.copy() for param in conv_model.parameters()]
        mu_before = conv_model.bn_layers[0].mu.copy()
        train_source(conv_model, source_data, epochs=1, optimizer_cfg=OptimizerConfig(lr=0.01), seed=0)
        for original, param in zip(before, conv_model.parameters()):
            np.testing.assert_array_equal(original, param.data)
        np.testing.assert_array_equal(mu_before, conv_model.bn_layers[0].mu)

    def test_same_seed_same_checkpoint(self, conv_arch, source_data, tmp_path):
        """Training is a pure function of its inputs and seed."""
        paths = []
        for name in ("first", "second"):
            trained = train_source(build_network(conv_arch), source_data, epochs=2,
                                   optimizer_cfg=OptimizerConfig(lr=0.01), seed=5, batch_size=16)
            paths.append(save_checkpoint(trained, tmp_path / f"{name}.json"))
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_running_stats_move(self, conv_arch, source_data):
        trained = train_source(build_network(conv_arch), source_data, epochs=1,
                               optimizer_cfg=OptimizerConfig(lr=0.01), seed=0, batch_size=16)
        assert not np.allclose(trained.bn_layers[0].mu, 0.0)

    def test_rejects_empty_dataset(self, conv_model):
        empty = LabeledDataset(x=np.zeros((0, 3, 8, 8)), y=np.zeros(0), num_classes=3)
        with pytest.raises(ContractError):
            train_source(conv_model, empty, epochs=1, optimizer_cfg=OptimizerConfig(), seed=0)

    def test_rejects_labels_beyond_head(self, conv_model):
        data = LabeledDataset(x=np.zeros((4, 3, 8, 8)), y=np.array([0, 1, 2, 3]), num_classes=4)
        with pytest.raises(ContractError):
            train_source(conv_model, data, epochs=1, optimizer_cfg=OptimizerConfig(), seed=0)

    def test_rejects_negative_epochs(self, conv_model, source_data):
        with pytest.raises(ContractError):
            train_source(conv_model, source_data, epochs=-1, optimizer_cfg=OptimizerConfig(), seed=0)
