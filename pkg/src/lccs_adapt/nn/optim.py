"""First-order optimizers over Parameter lists."""

import logging
from typing import Iterable, List

import numpy as np

from ..autograd.tensor import Parameter
from ..models.optimizer import OptimizerConfig
from ..utils.errors import ContractError

logger = logging.getLogger(__name__)


class Optimizer:
    """Base optimizer; state lives on the instance and persists across steps."""

    def __init__(self, parameters: Iterable[Parameter], lr: float):
        self.parameters: List[Parameter] = list(parameters)
        if not self.parameters:
            raise ContractError("optimizer needs at least one parameter")
        if lr < 0:
            raise ContractError(f"learning rate must be >= 0, got {lr}")
        self.lr = lr

    def zero_grad(self) -> None:
        for param in self.parameters:
            param.zero_grad()

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """Heavy-ball momentum: v <- momentum * v + g; p <- p - lr * v."""

    def __init__(self, parameters: Iterable[Parameter], lr: float = 0.01, momentum: float = 0.9):
        super().__init__(parameters, lr)
        self.momentum = momentum
        self.velocities = [np.zeros_like(param.data) for param in self.parameters]

    def step(self) -> None:
        for i, param in enumerate(self.parameters):
            if param.grad is None:
                continue
            if self.momentum > 0:
                self.velocities[i] = self.momentum * self.velocities[i] + param.grad
                update = self.velocities[i]
            else:
                update = param.grad
            param.assign(param.data - self.lr * update)


class Adam(Optimizer):
    """Adam with bias-corrected moment estimates."""

    def __init__(self, parameters: Iterable[Parameter], lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(parameters, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(param.data) for param in self.parameters]
        self.v = [np.zeros_like(param.data) for param in self.parameters]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for i, param in enumerate(self.parameters):
            if param.grad is None:
                continue
            grad = param.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (grad ** 2)
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            param.assign(param.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))


def build_optimizer(config: OptimizerConfig, parameters: Iterable[Parameter]) -> Optimizer:
    """Instantiate the optimizer an OptimizerConfig describes."""
    if config.kind == "adam":
        return Adam(parameters, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    if config.kind == "sgd":
        return SGD(parameters, lr=config.lr, momentum=config.momentum)
    raise ContractError(f"unknown optimizer kind {config.kind!r}")
