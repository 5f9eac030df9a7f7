"""Seeded random streams and content digests."""

import hashlib
import json
from typing import Any

import numpy as np


def make_rng(seed: int, *stream: Any) -> np.random.Generator:
    """Independent generator for (seed, stream...) so consumers never share draws.

    The stream labels are hashed, not summed, so ("train", 1) and ("test", 0)
    can never collide.
    """
    entropy = [int(seed)]
    for label in stream:
        digest = hashlib.sha256(str(label).encode("utf-8")).digest()
        entropy.append(int.from_bytes(digest[:4], "little"))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def digest_of(payload: Any, length: int = 12) -> str:
    """Stable hex digest of a JSON-serializable payload."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


def derive_seed(seed: int, *labels: Any) -> int:
    """Deterministic 31-bit child seed for a labelled sub-stage."""
    return int(make_rng(seed, *labels).integers(0, 2**31 - 1))
