"""Source-model training by empirical risk minimization."""

import logging
from typing import Optional

import numpy as np

from ..autograd.losses import cross_entropy, log_softmax
from ..autograd.tensor import backward
from ..data.datasets import LabeledDataset, epoch_batches
from ..models.optimizer import OptimizerConfig
from ..utils.errors import ContractError
from ..utils.seeding import make_rng
from .network import Network
from .optim import build_optimizer

logger = logging.getLogger(__name__)


def jitter(x: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian augmentation; identity when noise is zero."""
    if noise <= 0:
        return x
    return x + rng.normal(0.0, noise, size=x.shape)


def train_source(
    model: Network,
    dataset: LabeledDataset,
    epochs: int,
    optimizer_cfg: OptimizerConfig,
    seed: int,
    batch_size: int = 64,
    augment_noise: float = 0.0,
) -> Network:
    """Minimize cross-entropy over every parameter with BN in train mode.

    Returns a trained copy in eval mode; the input model is left untouched.
    """
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset", stage="train")
    if epochs < 0:
        raise ContractError(f"epochs must be >= 0, got {epochs}", stage="train")
    if dataset.y.max() >= model.num_classes:
        raise ContractError(f"labels exceed the model's {model.num_classes} classes", stage="train")

    trained = model.copy()
    if epochs == 0:
        trained.set_bn_mode("eval")
        return trained

    params = trained.set_trainable(["all"])
    optimizer = build_optimizer(optimizer_cfg, params)
    trained.set_bn_mode("train")
    noise_rng = make_rng(seed, "train-augment")

    for epoch in range(epochs):
        total_loss, correct = 0.0, 0
        for positions in epoch_batches(len(dataset), batch_size, seed, "train", epoch):
            x_batch = jitter(dataset.x[positions], augment_noise, noise_rng)
            logits = trained.forward(x_batch)
            loss = cross_entropy(logits, dataset.y[positions])
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
            total_loss += loss.item() * len(positions)
            correct += int((np.argmax(logits.data, axis=1) == dataset.y[positions]).sum())
        logger.info(
            f"Source epoch {epoch + 1}/{epochs}: loss {total_loss / len(dataset):.4f}, "
            f"train accuracy {correct / len(dataset):.3f}"
        )

    trained.set_trainable([])
    trained.set_bn_mode("eval")
    return trained


def support_loss(model: Network, x: np.ndarray, y: np.ndarray, batch_size: Optional[int] = None) -> float:
    """Mean cross-entropy of (x, y) under the model's current configuration, without a tape."""
    logits = model.logits(x, batch_size)
    return float(-log_softmax(logits)[np.arange(len(y)), y].mean())
