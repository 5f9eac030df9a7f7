"""Checkpoint document schema ("lccs-ckpt/1")."""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from .architecture import ArchitectureSpec

CHECKPOINT_FORMAT = "lccs-ckpt/1"


class ArrayEntry(BaseModel):
    """A named float64 array stored flat in row-major order."""
    name: str
    shape: List[int]
    values: List[float]


class BatchNormEntry(BaseModel):
    """Statistics and bookkeeping of one batch-norm layer."""
    name: str
    channels: int
    mu: List[float]
    sigma: List[float]
    epsilon: float
    momentum: float


class HeadEntry(BaseModel):
    """Classifier head descriptor."""
    kind: Literal["source_linear", "finetuned_linear", "nearest_centroid"]
    num_classes: int
    centroids: Optional[ArrayEntry] = None


class LCCSLayerEntry(BaseModel):
    """Adapted coefficients and spanning matrices of one layer."""
    n: int
    eta: List[float]
    rho: List[float]
    spanning_mu: ArrayEntry
    spanning_sigma: ArrayEntry


class LCCSRecordEntry(BaseModel):
    """Audit trail of an LCCS adaptation."""
    n_requested: int
    v_star: Optional[float] = None
    layer_v: List[float] = Field(default_factory=list)
    grid_objective: str = "cross_entropy"
    layers: List[LCCSLayerEntry]


class Provenance(BaseModel):
    seed: Optional[int] = None
    config_digest: Optional[str] = None
    strategy: Optional[str] = None
    online_strategy: Optional[str] = None
    extra: Dict[str, str] = Field(default_factory=dict)


class CheckpointDocument(BaseModel):
    """Top-level checkpoint document."""
    format: str
    architecture: ArchitectureSpec
    parameters: List[ArrayEntry]
    batch_norms: List[BatchNormEntry]
    head: HeadEntry
    provenance: Provenance = Field(default_factory=Provenance)
    lccs: Optional[LCCSRecordEntry] = None
