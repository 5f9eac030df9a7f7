"""Network architecture descriptors."""

from typing import List, Literal

from pydantic import Field, model_validator

from .base import BaseLCCSModel


class ArchitectureSpec(BaseLCCSModel):
    """Shape of a desk-scale network.

    convnet: conv(k x k) -> BN -> ReLU per width, then global average pool and
    a linear head. mlp: dense -> BN -> ReLU per width, then a linear head.
    """
    kind: Literal["convnet", "mlp"] = Field(default="convnet", description="Layer family")
    input_shape: List[int] = Field(default_factory=lambda: [3, 8, 8], description="(C, H, W) or (D,)")
    widths: List[int] = Field(default_factory=lambda: [8, 16], description="Channels / hidden units per block")
    kernel_size: int = Field(default=3, ge=1, description="Convolution kernel size")
    num_classes: int = Field(default=7, ge=2, description="Number of classes K")

    @model_validator(mode="after")
    def check_shapes(self) -> "ArchitectureSpec":
        if not self.widths or any(width < 1 for width in self.widths):
            raise ValueError("widths must be a nonempty list of positive integers")
        if self.kind == "convnet":
            if len(self.input_shape) != 3:
                raise ValueError("convnet input_shape must be (C, H, W)")
            shrink = len(self.widths) * (self.kernel_size - 1)
            if min(self.input_shape[1:]) - shrink < 1:
                raise ValueError("input too small for the stacked valid convolutions")
        elif len(self.input_shape) != 1:
            raise ValueError("mlp input_shape must be (D,)")
        return self

    @property
    def feature_dim(self) -> int:
        return self.widths[-1]
