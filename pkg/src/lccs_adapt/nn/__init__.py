"""Layers, networks, optimizers, training and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BatchNorm, Conv2d, Dense, GlobalAvgPool, ReLU, ema_update
from .network import CentroidHead, LinearHead, Network, build_network, count_lccs_params
from .optim import SGD, Adam, Optimizer, build_optimizer
from .training import train_source

__all__ = [
    "Adam",
    "BatchNorm",
    "CentroidHead",
    "Conv2d",
    "Dense",
    "GlobalAvgPool",
    "LinearHead",
    "Network",
    "Optimizer",
    "ReLU",
    "SGD",
    "build_network",
    "build_optimizer",
    "count_lccs_params",
    "ema_update",
    "load_checkpoint",
    "save_checkpoint",
    "train_source",
]
