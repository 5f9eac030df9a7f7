"""Optimizer configuration."""

from typing import Literal

from pydantic import Field

from .base import BaseLCCSModel


class OptimizerConfig(BaseLCCSModel):
    """Which update rule to use and its hyperparameters."""
    kind: Literal["adam", "sgd"] = Field(default="adam", description="Adam or SGD with momentum")
    lr: float = Field(default=0.001, ge=0, description="Learning rate")
    momentum: float = Field(default=0.9, ge=0, lt=1, description="Heavy-ball momentum (sgd)")
    beta1: float = Field(default=0.9, ge=0, lt=1, description="First-moment decay (adam)")
    beta2: float = Field(default=0.999, ge=0, lt=1, description="Second-moment decay (adam)")
    eps: float = Field(default=1e-8, gt=0, description="Denominator floor (adam)")
