"""Dataset persistence in the versioned "lccs-data/1" npz container."""

import logging
import zipfile
from pathlib import Path
from typing import Union

import numpy as np

from ..utils.errors import DatasetFormatError
from .datasets import LabeledDataset

logger = logging.getLogger(__name__)

DATASET_FORMAT = "lccs-data/1"
REQUIRED_KEYS = ("format", "x", "y", "num_classes", "domain", "seed", "indices")


def save_dataset(dataset: LabeledDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(
            handle,
            format=np.array(DATASET_FORMAT),
            x=dataset.x,
            y=dataset.y,
            num_classes=np.array(dataset.num_classes),
            domain=np.array(dataset.domain),
            seed=np.array(dataset.seed),
            indices=dataset.indices,
        )
    logger.info(f"Saved {len(dataset)} samples to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> LabeledDataset:
    """Load a dataset container, refusing unknown versions and malformed files."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            missing = [key for key in REQUIRED_KEYS if key not in archive.files]
            if missing:
                raise DatasetFormatError(f"{path} lacks entries {missing}", stage="load")
            declared = str(archive["format"])
            if declared != DATASET_FORMAT:
                raise DatasetFormatError(
                    f"{path} declares format {declared!r}; this build reads {DATASET_FORMAT!r}", stage="load"
                )
            return LabeledDataset(
                x=archive["x"],
                y=archive["y"],
                num_classes=int(archive["num_classes"]),
                domain=str(archive["domain"]),
                seed=int(archive["seed"]),
                indices=archive["indices"],
            )
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as e:
        raise DatasetFormatError(f"{path} is not a readable dataset container: {e}", stage="load") from e
