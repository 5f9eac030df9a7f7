"""Classifier-head replacements built from a labeled support set."""

import logging
from typing import List, Tuple

import numpy as np

from ..autograd.losses import cross_entropy, log_softmax
from ..autograd.tensor import Tensor, backward, no_grad
from ..data.datasets import epoch_batches
from ..models.optimizer import OptimizerConfig
from ..nn.network import CentroidHead, LinearHead, Network
from ..nn.optim import build_optimizer
from ..utils.errors import ContractError

logger = logging.getLogger(__name__)


def support_features(model: Network, x: np.ndarray) -> np.ndarray:
    """Penultimate features under the model's current BN configuration."""
    with no_grad():
        return model.features(x).numpy()


def build_ncc_head(model: Network, x: np.ndarray, y: np.ndarray) -> Network:
    """Copy of model whose head assigns the class of the nearest per-class mean feature."""
    y = np.asarray(y, dtype=np.int64)
    features = support_features(model, x)
    centroids = []
    for label in range(model.num_classes):
        members = features[y == label]
        if len(members) == 0:
            raise ContractError(f"support set has no sample of class {label}", stage="adapt")
        centroids.append(members.mean(axis=0))
    adapted = model.copy()
    adapted.head = CentroidHead(np.stack(centroids))
    logger.info(f"Built nearest-centroid head over {len(y)} support samples")
    return adapted


def finetune_classifier(
    model: Network,
    x: np.ndarray,
    y: np.ndarray,
    optimizer_cfg: OptimizerConfig,
    epochs: int,
    batch_size: int = 32,
    seed: int = 0,
) -> Tuple[Network, List[float]]:
    """Train only the linear head on frozen support features.

    Returns the adapted copy and the support loss before training and after each epoch.
    """
    if epochs < 0:
        raise ContractError(f"epochs must be >= 0, got {epochs}", stage="adapt")
    if not isinstance(model.head, LinearHead):
        raise ContractError("classifier finetuning needs a linear head", stage="adapt")
    y = np.asarray(y, dtype=np.int64)
    adapted = model.copy()
    features = support_features(adapted, x)

    def head_loss() -> float:
        with no_grad():
            logits = adapted.head.forward(Tensor(features)).data
        return float(-log_softmax(logits)[np.arange(len(y)), y].mean())

    trace = [head_loss()]
    if epochs == 0:
        return adapted, trace

    params = adapted.set_trainable(["head"])
    optimizer = build_optimizer(optimizer_cfg, params)
    for epoch in range(epochs):
        for positions in epoch_batches(len(y), batch_size, seed, "finetune-classifier", epoch):
            loss = cross_entropy(adapted.head.forward(Tensor(features[positions])), y[positions])
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
        trace.append(head_loss())
    adapted.set_trainable([])
    adapted.head.kind = "finetuned_linear"
    logger.info(f"Finetuned classifier for {epochs} epochs: support loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return adapted, trace
