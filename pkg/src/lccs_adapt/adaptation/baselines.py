"""Comparison strategies: AdaBN, test-time BN, Tent, BN-parameter and classifier finetuning, NCC."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..autograd.losses import cross_entropy, entropy, per_sample_entropy
from ..autograd.tensor import backward, no_grad
from ..data.datasets import epoch_batches
from ..data.sampling import StreamBatch
from ..models.experiment import ONLINE_STRATEGIES, AdaptationConfig
from ..models.optimizer import OptimizerConfig
from ..nn.network import Network
from ..nn.optim import build_optimizer
from ..nn.training import support_loss
from ..utils.errors import ContractError
from .heads import build_ncc_head, finetune_classifier
from .lccs import collect_support_stats

logger = logging.getLogger(__name__)


@dataclass
class OnlineResult:
    """Predictions of an online evaluator in stream order."""
    predictions: np.ndarray
    logits: np.ndarray
    labels: np.ndarray
    indices: np.ndarray
    batch_entropy: List[float]

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.predictions == self.labels))


def adabn_adapt(
    model: Network,
    x: np.ndarray,
    m_epochs: int = 10,
    ema_momentum: float = 0.1,
    batch_size: int = 32,
    seed: int = 0,
) -> Network:
    """Copy of model whose BN statistics are replaced by those of x, frozen for evaluation."""
    stats = collect_support_stats(model, x, m_epochs, ema_momentum, batch_size, seed)
    adapted = model.copy()
    for layer, (mu, sigma) in zip(adapted.bn_layers, stats):
        layer.set_statistics(mu, sigma)
    adapted.set_bn_mode("eval")
    logger.info(f"AdaBN replaced statistics of {len(stats)} BN layers from {len(x)} samples")
    return adapted


def _collect(batches: Sequence[StreamBatch], logits: List[np.ndarray], entropies: List[float]) -> OnlineResult:
    if not batches:
        raise ContractError("stream is empty", stage="evaluate")
    stacked = np.concatenate(logits, axis=0)
    return OnlineResult(
        predictions=np.argmax(stacked, axis=1),
        logits=stacked,
        labels=np.concatenate([batch.y for batch in batches]),
        indices=np.concatenate([batch.indices for batch in batches]),
        batch_entropy=entropies,
    )


def testtime_bn_eval(model: Network, batches: Sequence[StreamBatch], blend: float = 1.0) -> OnlineResult:
    """Normalize every stream batch by its own statistics; nothing carries over."""
    work = model.copy()
    work.set_bn_mode("testtime_bn", blend)
    logits: List[np.ndarray] = []
    entropies: List[float] = []
    with no_grad():
        for batch in batches:
            batch_logits = work.forward(batch.x).numpy()
            logits.append(batch_logits)
            entropies.append(float(per_sample_entropy(batch_logits).mean()))
    return _collect(batches, logits, entropies)


def tent_eval(model: Network, batches: Sequence[StreamBatch], optimizer_cfg: OptimizerConfig,
              blend: float = 1.0) -> OnlineResult:
    """Online entropy minimization over BN affine parameters, one step per batch.

    Each batch is predicted before its update. Parameters and optimizer
    state persist across batches.
    """
    work = model.copy()
    work.set_bn_mode("testtime_bn", blend)
    optimizer = build_optimizer(optimizer_cfg, work.set_trainable(["bn_affine"]))
    logits: List[np.ndarray] = []
    entropies: List[float] = []
    for batch in batches:
        batch_logits = work.forward(batch.x)
        loss = entropy(batch_logits)
        logits.append(batch_logits.numpy())
        entropies.append(loss.item())
        optimizer.zero_grad()
        backward(loss)
        optimizer.step()
    logger.debug(f"Tent adapted over {len(batches)} batches")
    return _collect(batches, logits, entropies)


def finetune_bn_params(
    model: Network,
    x: np.ndarray,
    y: np.ndarray,
    optimizer_cfg: OptimizerConfig,
    epochs: int,
    batch_size: int = 32,
    seed: int = 0,
) -> Tuple[Network, List[float]]:
    """Train every BN (gamma, beta) on the support with source statistics held fixed."""
    if epochs < 0:
        raise ContractError(f"epochs must be >= 0, got {epochs}", stage="adapt")
    y = np.asarray(y, dtype=np.int64)
    adapted = model.copy()
    adapted.set_bn_mode("eval")
    trace = [support_loss(adapted, x, y)]
    if epochs == 0:
        return adapted, trace

    optimizer = build_optimizer(optimizer_cfg, adapted.set_trainable(["bn_affine"]))
    for epoch in range(epochs):
        for positions in epoch_batches(len(y), batch_size, seed, "finetune-bn", epoch):
            loss = cross_entropy(adapted.forward(x[positions]), y[positions])
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
        trace.append(support_loss(adapted, x, y))
    adapted.set_trainable([])
    logger.info(f"Finetuned BN parameters for {epochs} epochs: support loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return adapted, trace


BASELINE_STRATEGIES = ("adabn", "testtime_bn", "tent", "finetune_bn", "finetune_classifier", "ncc")
LABELED_STRATEGIES = ("finetune_bn", "finetune_classifier", "ncc")


@dataclass
class AdaptStrategy:
    """A baseline and its knobs; online kinds adapt while the stream is evaluated.

    ``kind`` uses the strategy names of ``AdaptationConfig``. Offline kinds
    go through ``adapt``, online kinds through ``evaluate``.
    """
    kind: str
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 10
    m_epochs: int = 10
    ema_momentum: float = 0.1
    batch_size: int = 32
    blend: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in BASELINE_STRATEGIES:
            raise ContractError(f"unknown strategy {self.kind!r}; expected one of {BASELINE_STRATEGIES}")

    @classmethod
    def from_config(cls, cfg: AdaptationConfig) -> "AdaptStrategy":
        """Baseline described by an adaptation config; statistic passes run at least one epoch."""
        return cls(
            kind=cfg.strategy,
            optimizer=cfg.tent_optimizer if cfg.strategy == "tent" else cfg.optimizer,
            epochs=cfg.finetune_epochs,
            m_epochs=max(cfg.m_epochs, 1),
            ema_momentum=cfg.ema_momentum,
            batch_size=cfg.batch_size,
            blend=cfg.testtime_blend,
        )

    @property
    def online(self) -> bool:
        return self.kind in ONLINE_STRATEGIES

    @property
    def needs_labels(self) -> bool:
        return self.kind in LABELED_STRATEGIES

    def adapt(self, model: Network, x: np.ndarray, y: Optional[np.ndarray] = None, seed: int = 0) -> Network:
        """Adapted copy of model; online kinds return an untouched copy to be adapted on the stream."""
        if self.online:
            return model.copy()
        if self.kind == "adabn":
            return adabn_adapt(model, x, self.m_epochs, self.ema_momentum, self.batch_size, seed)
        if y is None:
            raise ContractError(f"{self.kind} needs a labeled support set", stage="adapt")
        if self.kind == "finetune_bn":
            adapted, _ = finetune_bn_params(model, x, y, self.optimizer, self.epochs, self.batch_size, seed)
            return adapted
        if self.kind == "finetune_classifier":
            adapted, _ = finetune_classifier(model, x, y, self.optimizer, self.epochs, self.batch_size, seed)
            return adapted
        return build_ncc_head(model, x, y)

    def evaluate(self, model: Network, batches: Sequence[StreamBatch]) -> OnlineResult:
        """Run an online kind over the stream in order."""
        if self.kind == "tent":
            return tent_eval(model, batches, self.optimizer, self.blend)
        if self.kind == "testtime_bn":
            return testtime_bn_eval(model, batches, self.blend)
        raise ContractError(f"{self.kind} is not an online strategy", stage="evaluate")


__all__ = [
    "AdaptStrategy",
    "OnlineResult",
    "adabn_adapt",
    "build_ncc_head",
    "finetune_bn_params",
    "finetune_classifier",
    "tent_eval",
    "testtime_bn_eval",
]
