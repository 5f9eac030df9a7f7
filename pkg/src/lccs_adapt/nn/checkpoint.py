"""Checkpoint persistence in the self-describing "lccs-ckpt/1" JSON format."""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from pydantic import ValidationError

from ..models.checkpoint import (
    CHECKPOINT_FORMAT,
    ArrayEntry,
    BatchNormEntry,
    CheckpointDocument,
    HeadEntry,
    Provenance,
)
from ..utils.errors import (
    CheckpointShapeError,
    CheckpointVersionError,
    MalformedCheckpointError,
)
from .network import CentroidHead, LinearHead, Network, build_network

logger = logging.getLogger(__name__)


def array_entry(name: str, values: np.ndarray) -> ArrayEntry:
    values = np.asarray(values, dtype=np.float64)
    return ArrayEntry(name=name, shape=list(values.shape), values=values.reshape(-1).tolist())


def entry_array(entry: ArrayEntry, expected_shape: Optional[tuple] = None) -> np.ndarray:
    """Rebuild an array, checking the declared shape against the data and the expectation."""
    shape = tuple(entry.shape)
    if any(extent < 0 for extent in shape) or int(np.prod(shape)) != len(entry.values):
        raise CheckpointShapeError(
            f"array {entry.name!r} declares shape {shape} but stores {len(entry.values)} values", stage="load"
        )
    if expected_shape is not None and shape != tuple(expected_shape):
        raise CheckpointShapeError(
            f"array {entry.name!r} has shape {shape}, model expects {tuple(expected_shape)}", stage="load"
        )
    return np.array(entry.values, dtype=np.float64).reshape(shape)


def to_document(model: Network, provenance: Optional[Provenance] = None) -> CheckpointDocument:
    head_entry = HeadEntry(kind=model.head.kind, num_classes=model.num_classes)
    if isinstance(model.head, CentroidHead):
        head_entry.centroids = array_entry("head.centroids", model.head.centroids)
    return CheckpointDocument(
        format=CHECKPOINT_FORMAT,
        architecture=model.architecture,
        parameters=[array_entry(name, param.data) for name, param in model.named_parameters("all")],
        batch_norms=[
            BatchNormEntry(
                name=layer.name, channels=layer.channels, mu=layer.mu.tolist(), sigma=layer.sigma.tolist(),
                epsilon=layer.epsilon, momentum=layer.momentum,
            )
            for layer in model.bn_layers
        ],
        head=head_entry,
        provenance=provenance or Provenance(),
        lccs=model.lccs_record,
    )


def save_checkpoint(model: Network, path: Union[str, Path], provenance: Optional[Provenance] = None) -> Path:
    """Write the model as a JSON document; floats use their shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = to_document(model, provenance)
    path.write_text(json.dumps(document.model_dump(mode="json"), indent=1), encoding="utf-8")
    logger.info(f"Saved checkpoint to {path}")
    return path


def read_document(path: Union[str, Path]) -> CheckpointDocument:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise MalformedCheckpointError(f"{path} is not a valid checkpoint document: {e}", stage="load") from e
    if not isinstance(raw, dict):
        raise MalformedCheckpointError(f"{path} does not hold a checkpoint object", stage="load")
    declared = raw.get("format")
    if declared != CHECKPOINT_FORMAT:
        raise CheckpointVersionError(
            f"{path} declares format {declared!r}; this build reads {CHECKPOINT_FORMAT!r}", stage="load"
        )
    try:
        return CheckpointDocument.model_validate(raw)
    except ValidationError as e:
        raise MalformedCheckpointError(f"{path} has an invalid structure: {e}", stage="load") from e


def from_document(document: CheckpointDocument) -> Network:
    model = build_network(document.architecture)
    stored: Dict[str, ArrayEntry] = {entry.name: entry for entry in document.parameters}

    if document.head.kind == "nearest_centroid":
        if document.head.centroids is None:
            raise MalformedCheckpointError("nearest-centroid head without centroids", stage="load")
        model.head = CentroidHead(entry_array(document.head.centroids))
    else:
        model.head.kind = document.head.kind
    if model.num_classes != document.head.num_classes:
        raise CheckpointShapeError(
            f"head declares {document.head.num_classes} classes, architecture builds {model.num_classes}",
            stage="load",
        )

    for name, param in model.named_parameters("all"):
        if name not in stored:
            raise MalformedCheckpointError(f"missing parameter {name!r}", stage="load")
        param.assign(entry_array(stored.pop(name), param.shape))
    if stored:
        raise MalformedCheckpointError(f"unexpected parameters {sorted(stored)}", stage="load")

    bn_layers = model.bn_layers
    if len(document.batch_norms) != len(bn_layers):
        raise CheckpointShapeError(
            f"{len(document.batch_norms)} batch-norm entries for {len(bn_layers)} layers", stage="load"
        )
    for layer, entry in zip(bn_layers, document.batch_norms):
        if entry.name != layer.name:
            raise MalformedCheckpointError(f"batch-norm entry {entry.name!r} where {layer.name!r} was expected", stage="load")
        if entry.channels != layer.channels or len(entry.mu) != layer.channels or len(entry.sigma) != layer.channels:
            raise CheckpointShapeError(f"batch-norm {entry.name!r} statistics do not have {layer.channels} channels", stage="load")
        layer.mu = np.array(entry.mu, dtype=np.float64)
        layer.sigma = np.array(entry.sigma, dtype=np.float64)
        layer.epsilon = entry.epsilon
        layer.momentum = entry.momentum

    model.lccs_record = document.lccs
    return model


def load_checkpoint(path: Union[str, Path]) -> Network:
    """Load a model saved by save_checkpoint, in eval mode."""
    model = from_document(read_document(path))
    logger.info(f"Loaded checkpoint from {path}")
    return model


def load_provenance(path: Union[str, Path]) -> Provenance:
    return read_document(path).provenance
