"""Synthetic domain and evaluation-stream descriptors."""

from typing import List, Literal, Optional, Tuple

from pydantic import Field, model_validator

from .base import BaseLCCSModel


class DomainSpec(BaseLCCSModel):
    """A synthetic image domain.

    Class structure and the latent-to-image rendering map are drawn from
    ``structure_seed`` and are shared by every domain built with the same
    seed; domains differ only through the moment shift (``scale``, ``shift``)
    and the optional latent warp.
    """
    name: str = Field(default="source", description="Domain label")
    num_classes: int = Field(default=7, ge=2, description="Number of classes K")
    latent_dim: int = Field(default=6, ge=1, description="Latent dimension")
    image_shape: Tuple[int, int, int] = Field(default=(3, 8, 8), description="Rendered (C, H, W)")
    class_separation: float = Field(default=3.0, gt=0, description="Scale of class means in latent space")
    latent_noise: float = Field(default=1.0, ge=0, description="Within-class latent std")
    pixel_noise: float = Field(default=0.1, ge=0, description="Additive pixel noise std")
    scale: List[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0], description="Per-channel scale c")
    shift: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description="Per-channel shift s")
    warp: bool = Field(default=False, description="Apply a nonlinear latent warp")
    warp_strength: float = Field(default=0.8, ge=0, description="Warp amplitude")
    structure_seed: int = Field(default=0, ge=0, description="Seed of class means and rendering map")

    @model_validator(mode="after")
    def check_moments(self) -> "DomainSpec":
        channels = self.image_shape[0]
        if len(self.scale) != channels or len(self.shift) != channels:
            raise ValueError(f"scale and shift need {channels} entries")
        if any(value <= 0 for value in self.scale):
            raise ValueError("scale entries must be positive")
        return self


class StreamPolicy(BaseLCCSModel):
    """How a target test set is presented to the model."""
    batch_size: int = Field(default=128, ge=1, description="Test-time batch size")
    ordering: Literal["shuffled", "sequential_by_class"] = Field(default="shuffled", description="Sample order")
    imbalance_alpha: float = Field(default=1.0, ge=1.0, description="Largest-to-smallest class size ratio")
    n_max: Optional[int] = Field(default=None, ge=1, description="Largest class size; defaults to the smallest class population")
    seed: int = Field(default=0, ge=0, description="Ordering / subsampling seed")

    @property
    def order_label(self) -> str:
        return "by-class" if self.ordering == "sequential_by_class" else "shuffled"
