"""In-memory labeled datasets and support sets."""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from ..utils.errors import ContractError
from ..utils.seeding import make_rng


@dataclass
class LabeledDataset:
    """Samples x (N, C, H, W) or (N, D) with integer labels y in [0, num_classes).

    ``indices`` records the position of every sample in the dataset it was
    drawn from, so subsets and streams can be traced back to their origin.
    """
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    domain: str = ""
    seed: int = 0
    indices: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim not in (2, 4):
            raise ContractError(f"samples must be rank 2 or 4, got shape {self.x.shape}")
        if self.y.shape != (self.x.shape[0],):
            raise ContractError(f"{self.x.shape[0]} samples but labels have shape {self.y.shape}")
        if self.num_classes < 1:
            raise ContractError("num_classes must be positive")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")
        if self.indices is None:
            self.indices = np.arange(len(self.y))
        self.indices = np.asarray(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, positions: np.ndarray) -> "LabeledDataset":
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(
            x=self.x[positions], y=self.y[positions], num_classes=self.num_classes,
            domain=self.domain, seed=self.seed, indices=self.indices[positions],
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)


@dataclass
class SupportSet:
    """Exactly k labeled target samples per class."""
    x: np.ndarray
    y: np.ndarray
    k: int
    num_classes: int
    seed: int
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        counts = np.bincount(self.y, minlength=self.num_classes)
        if len(counts) != self.num_classes or np.any(counts != self.k):
            raise ContractError(f"support set must hold exactly {self.k} samples of each of {self.num_classes} classes")

    def __len__(self) -> int:
        return len(self.y)

    def as_dataset(self) -> LabeledDataset:
        return LabeledDataset(self.x, self.y, self.num_classes, domain="support", seed=self.seed, indices=self.indices)


def iterate_minibatches(size: int, batch_size: int, rng: Optional[np.random.Generator] = None,
                        merge_singleton: bool = True) -> Iterator[np.ndarray]:
    """Consecutive position batches, shuffled when rng is given.

    A trailing batch of one sample is folded into the previous batch so
    rank-2 batch statistics never see a single sample.
    """
    if batch_size < 1:
        raise ContractError(f"batch size must be >= 1, got {batch_size}")
    order = rng.permutation(size) if rng is not None else np.arange(size)
    bounds: List[Tuple[int, int]] = [(start, min(start + batch_size, size)) for start in range(0, size, batch_size)]
    if merge_singleton and len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        bounds[-2] = (bounds[-2][0], size)
        bounds.pop()
    for start, stop in bounds:
        yield order[start:stop]


def epoch_batches(size: int, batch_size: int, seed: int, *stream, merge_singleton: bool = True):
    """Shuffled batches for one epoch, drawn from the (seed, *stream) generator."""
    return iterate_minibatches(size, batch_size, make_rng(seed, *stream), merge_singleton)
