"""Minimal float64 autograd engine and the numeric kernels built on it."""

from .linalg import SVDResult, svd_thin
from .losses import cross_entropy, entropy
from .ops import conv2d, elementwise, matmul
from .tensor import Parameter, Tape, Tensor, backward, no_grad

__all__ = [
    "Parameter",
    "SVDResult",
    "Tape",
    "Tensor",
    "backward",
    "conv2d",
    "cross_entropy",
    "elementwise",
    "entropy",
    "matmul",
    "no_grad",
    "svd_thin",
]
