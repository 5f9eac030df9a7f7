"""Network layers: dense, convolution, ReLU, global pooling and batch norm."""

import logging
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np

from ..autograd import ops
from ..autograd.tensor import Parameter, Tensor
from ..config.settings import get_settings
from ..utils.errors import ContractError, DegenerateVarianceError

if TYPE_CHECKING:
    from ..adaptation.lccs import LCCSLayerState


logger = logging.getLogger(__name__)

BN_MODES = ("train", "eval", "testtime_bn", "lccs")


def ema_update(old: np.ndarray, batch_stat: np.ndarray, momentum: float) -> np.ndarray:
    """(1 - momentum) * old + momentum * batch_stat."""
    old = np.asarray(old, dtype=np.float64)
    batch_stat = np.asarray(batch_stat, dtype=np.float64)
    if old.shape != batch_stat.shape:
        raise ContractError(f"ema_update: shapes differ, {old.shape} vs {batch_stat.shape}")
    if not 0.0 <= momentum <= 1.0:
        raise ContractError(f"ema_update: momentum must lie in [0, 1], got {momentum}")
    return (1.0 - momentum) * old + momentum * batch_stat


def nudge_zeros(values: np.ndarray, magnitude: float) -> np.ndarray:
    """Push entries with |value| < magnitude out to +-magnitude (zero goes positive)."""
    values = np.asarray(values, dtype=np.float64).copy()
    small = np.abs(values) < magnitude
    if np.any(small):
        values[small] = np.where(values[small] < 0, -magnitude, magnitude)
    return values


class Layer:
    """Base layer. Subclasses implement forward and list their parameters."""

    name: str = ""

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> List[Tuple[str, Parameter]]:
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


class Dense(Layer):
    """x @ W (+ b) for rank-2 input."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 rng: Optional[np.random.Generator] = None, name: str = "dense"):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(rng.normal(0.0, np.sqrt(2.0 / in_features), size=(in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ContractError(f"{self.name}: expected (N, {self.in_features}) input, got {x.shape}")
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.channel_shift(out, self.bias)
        return out

    def parameters(self) -> List[Tuple[str, Parameter]]:
        params = [("weight", self.weight)]
        if self.bias is not None:
            params.append(("bias", self.bias))
        return params


class Conv2d(Layer):
    """Valid stride-1 convolution without bias (a batch norm always follows)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None, name: str = "conv"):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        self.kernels = Parameter(
            rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_channels, in_channels, kernel_size, kernel_size))
        )

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.kernels)

    def parameters(self) -> List[Tuple[str, Parameter]]:
        return [("kernels", self.kernels)]


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(x)


class GlobalAvgPool(Layer):
    def __init__(self, name: str = "pool"):
        self.name = name

    def forward(self, x: Tensor) -> Tensor:
        return ops.spatial_mean(x)


class BatchNorm(Layer):
    """Per-channel batch normalization with four statistic sources.

    * ``train``: current-batch statistics, differentiable, running stats updated by EMA.
    * ``eval``: stored ``mu`` / ``sigma``.
    * ``testtime_bn``: current-batch statistics, stored ones untouched. With
      ``blend < 1`` the batch statistics are mixed with the stored ones.
    * ``lccs``: statistics synthesized by the attached LCCS layer state.

    ``mu`` and ``sigma`` are the running mean and standard deviation, with
    ``sigma = sqrt(var + epsilon)``.
    """

    def __init__(self, channels: int, epsilon: Optional[float] = None, momentum: Optional[float] = None,
                 name: str = "bn"):
        settings = get_settings()
        if channels < 1:
            raise ContractError(f"batch norm needs at least one channel, got {channels}")
        self.name = name
        self.channels = channels
        self.epsilon = settings.bn_epsilon if epsilon is None else float(epsilon)
        self.momentum = settings.bn_momentum if momentum is None else float(momentum)
        self.mu = np.zeros(channels)
        self.sigma = np.full(channels, np.sqrt(1.0 + self.epsilon))
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.mode = "eval"
        self.blend = 1.0
        self.lccs_state: Optional["LCCSLayerState"] = None
        self.capture = False
        self.captured: List[np.ndarray] = []
        self.last_batch_stats: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def set_mode(self, mode: str, blend: float = 1.0) -> None:
        if mode not in BN_MODES:
            raise ContractError(f"unknown batch-norm mode {mode!r}; expected one of {BN_MODES}")
        if mode == "lccs" and self.lccs_state is None:
            raise ContractError(f"{self.name}: lccs mode needs an attached LCCS layer state")
        if not 0.0 <= blend <= 1.0:
            raise ContractError(f"testtime blend must lie in [0, 1], got {blend}")
        self.mode = mode
        self.blend = blend

    def set_statistics(self, mu: np.ndarray, sigma: np.ndarray) -> None:
        mu = np.asarray(mu, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        if mu.shape != (self.channels,) or sigma.shape != (self.channels,):
            raise ContractError(f"{self.name}: statistics must have shape ({self.channels},)")
        if np.any(sigma <= 0.0):
            raise ContractError(f"{self.name}: sigma entries must be positive")
        self.mu = mu.copy()
        self.sigma = sigma.copy()

    def nudge_gamma(self) -> None:
        """Replace zero scale entries by a tiny nonzero value."""
        self.gamma.assign(nudge_zeros(self.gamma.data, get_settings().gamma_nudge))

    def parameters(self) -> List[Tuple[str, Parameter]]:
        return [("gamma", self.gamma), ("beta", self.beta)]

    def _check_input(self, z: Tensor) -> None:
        if z.ndim not in (2, 4):
            raise ContractError(f"{self.name}: expected rank-2 or rank-4 input, got {z.shape}")
        if z.shape[0] == 0:
            raise ContractError(f"{self.name}: empty batch")
        if z.shape[1] != self.channels:
            raise ContractError(f"{self.name}: expected {self.channels} channels, got {z.shape[1]}")

    def _batch_statistics(self, z: Tensor) -> Tuple[Tensor, Tensor]:
        if z.ndim == 2 and z.shape[0] == 1:
            raise DegenerateVarianceError(
                f"{self.name}: batch statistics of a single rank-2 sample have zero variance"
            )
        mean = ops.channel_mean(z)
        var = ops.channel_mean(ops.square(ops.channel_center(z, mean)))
        sigma = ops.sqrt(ops.add(var, self.epsilon))
        self.last_batch_stats = (mean.data.copy(), sigma.data.copy())
        return mean, sigma

    def statistics(self, z: Tensor) -> Tuple[Tensor, Tensor]:
        """The (mu, sigma) pair this layer normalizes z with in its current mode."""
        if self.mode == "eval":
            return Tensor(self.mu), Tensor(self.sigma)
        if self.mode == "lccs":
            return self.lccs_state.statistics()
        mean, sigma = self._batch_statistics(z)
        if self.mode == "train":
            self.mu = ema_update(self.mu, mean.data, self.momentum)
            self.sigma = ema_update(self.sigma, sigma.data, self.momentum)
        elif self.blend < 1.0:
            mean = ops.add(ops.mul(mean, self.blend), Tensor(self.mu * (1.0 - self.blend)))
            sigma = ops.add(ops.mul(sigma, self.blend), Tensor(self.sigma * (1.0 - self.blend)))
        return mean, sigma

    def forward(self, z: Tensor) -> Tensor:
        self._check_input(z)
        if self.capture:
            self.captured.append(z.data.copy())
        mu, sigma = self.statistics(z)
        normalized = ops.channel_divide(ops.channel_center(z, mu), sigma)
        return ops.channel_shift(ops.channel_scale(normalized, self.gamma), self.beta)
