"""Support sampling, long-tail subsets and ordered evaluation streams."""

import logging
from typing import List, NamedTuple

import numpy as np

from ..models.domain import StreamPolicy
from ..utils.errors import ContractError
from ..utils.seeding import make_rng
from .datasets import LabeledDataset, SupportSet

logger = logging.getLogger(__name__)


class StreamBatch(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    indices: np.ndarray


def sample_support(dataset: LabeledDataset, k: int, seed: int) -> SupportSet:
    """k samples per class, uniformly without replacement, ordered by class."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}", stage="support")
    counts = dataset.class_counts()
    short = [label for label, count in enumerate(counts) if count < k]
    if short:
        raise ContractError(f"classes {short} have fewer than {k} samples", stage="support")
    rng = make_rng(seed, "support", k)
    chosen = []
    for label in range(dataset.num_classes):
        members = np.flatnonzero(dataset.y == label)
        chosen.append(np.sort(rng.choice(members, size=k, replace=False)))
    positions = np.concatenate(chosen)
    return SupportSet(
        x=dataset.x[positions], y=dataset.y[positions], k=k, num_classes=dataset.num_classes,
        seed=seed, indices=dataset.indices[positions],
    )


def longtail_sizes(num_classes: int, alpha: float, n_max: int) -> List[int]:
    """n_c = round_half_up(n_max * alpha ** (-c / (K - 1))), at least 1."""
    if alpha < 1:
        raise ContractError(f"imbalance ratio must be >= 1, got {alpha}")
    if num_classes == 1:
        return [n_max]
    return [
        max(1, int(np.floor(n_max * alpha ** (-label / (num_classes - 1)) + 0.5)))
        for label in range(num_classes)
    ]


def make_longtail(dataset: LabeledDataset, alpha: float, n_max: int, seed: int) -> LabeledDataset:
    """Subset with exponentially decaying class sizes from class 0 to class K-1.

    The kept positions of each class are a seeded draw, stored in their
    original order.
    """
    sizes = longtail_sizes(dataset.num_classes, alpha, n_max)
    counts = dataset.class_counts()
    if n_max > counts.min():
        raise ContractError(f"n_max {n_max} exceeds the smallest class population {counts.min()}")
    rng = make_rng(seed, "longtail", alpha)
    kept = []
    for label, size in enumerate(sizes):
        members = np.flatnonzero(dataset.y == label)
        kept.append(np.sort(rng.choice(members, size=size, replace=False)))
    positions = np.sort(np.concatenate(kept))
    logger.debug(f"Long-tail subset (alpha={alpha}): class sizes {sizes}")
    return dataset.subset(positions)


def make_stream(dataset: LabeledDataset, policy: StreamPolicy) -> List[StreamBatch]:
    """Order the dataset by the policy and cut it into consecutive batches (last may be short)."""
    if len(dataset) == 0:
        raise ContractError("cannot stream an empty dataset", stage="evaluate")
    rng = make_rng(policy.seed, "stream", policy.ordering)
    order = rng.permutation(len(dataset))
    if policy.ordering == "sequential_by_class":
        order = order[np.argsort(dataset.y[order], kind="stable")]
    return [
        StreamBatch(dataset.x[chunk], dataset.y[chunk], dataset.indices[chunk])
        for chunk in (order[start:start + policy.batch_size] for start in range(0, len(order), policy.batch_size))
    ]


def policy_subset(dataset: LabeledDataset, policy: StreamPolicy) -> LabeledDataset:
    """The long-tail subset a policy evaluates on (the whole dataset when alpha is 1 and n_max unset)."""
    if policy.imbalance_alpha == 1.0 and policy.n_max is None:
        return dataset
    n_max = policy.n_max if policy.n_max is not None else int(dataset.class_counts().min())
    return make_longtail(dataset, policy.imbalance_alpha, n_max, policy.seed)
