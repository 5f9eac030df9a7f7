"""Seeded synthetic image domains with first/second-moment covariate shift.

Samples are rendered from a class-structured latent code through a fixed
random map shared by every domain of one ``structure_seed``:

    x0[c, h, w] = sum_j z_j * (A[j, c] + B[j, c] * T[j, h, w]) + noise
    x[c]        = scale[c] * x0[c] + shift[c]

so domains built from the same structure differ only in their channel
moments (plus an optional nonlinear latent warp).
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..models.domain import DomainSpec
from ..utils.errors import ContractError
from ..utils.seeding import make_rng
from .datasets import LabeledDataset

logger = logging.getLogger(__name__)

PRESETS = ("moment_shift", "warped_shift")


@dataclass(frozen=True)
class DomainStructure:
    class_means: np.ndarray
    channel_weights: np.ndarray
    pattern_weights: np.ndarray
    patterns: np.ndarray
    warp_matrix: np.ndarray


def domain_structure(spec: DomainSpec) -> DomainStructure:
    """Class means and rendering map drawn from the structure seed alone."""
    rng = make_rng(spec.structure_seed, "structure", spec.num_classes, spec.latent_dim, *spec.image_shape)
    latent = spec.latent_dim
    channels, height, width = spec.image_shape
    class_means = rng.normal(size=(spec.num_classes, latent)) * spec.class_separation
    channel_weights = rng.normal(size=(latent, channels)) / np.sqrt(latent)
    pattern_weights = rng.normal(size=(latent, channels)) / np.sqrt(latent)
    patterns = rng.normal(size=(latent, height, width))
    patterns -= patterns.mean(axis=(1, 2), keepdims=True)
    patterns /= patterns.std(axis=(1, 2), keepdims=True)
    warp_matrix = rng.normal(size=(latent, latent)) / np.sqrt(latent)
    return DomainStructure(class_means, channel_weights, pattern_weights, patterns, warp_matrix)


def gen_dataset(spec: DomainSpec, size: int, seed: int) -> LabeledDataset:
    """Balanced labeled dataset of ``size`` samples; a pure function of (spec, size, seed)."""
    if size < spec.num_classes:
        raise ContractError(f"size {size} is smaller than the {spec.num_classes} classes", stage="generate")
    structure = domain_structure(spec)
    rng = make_rng(seed, "samples")
    labels = rng.permutation(np.arange(size) % spec.num_classes)

    z = structure.class_means[labels] + spec.latent_noise * rng.normal(size=(size, spec.latent_dim))
    if spec.warp:
        z = z + spec.warp_strength * np.tanh(z @ structure.warp_matrix)

    flat = np.einsum("nj,jc->nc", z, structure.channel_weights)
    textured = np.einsum("nj,jc,jhw->nchw", z, structure.pattern_weights, structure.patterns)
    x0 = flat[:, :, None, None] + textured
    x0 = x0 + spec.pixel_noise * rng.normal(size=x0.shape)
    scale = np.asarray(spec.scale).reshape(1, -1, 1, 1)
    shift = np.asarray(spec.shift).reshape(1, -1, 1, 1)
    x = scale * x0 + shift
    logger.debug(f"Generated {size} samples of domain {spec.name!r} (seed {seed})")
    return LabeledDataset(x=x, y=labels, num_classes=spec.num_classes, domain=spec.name, seed=seed)


def domain_pair(preset: str, num_classes: int = 7, structure_seed: int = 0,
                image_shape: Tuple[int, int, int] = (3, 8, 8)) -> Tuple[DomainSpec, DomainSpec]:
    """(source, target) specs for a named shift preset.

    ``moment_shift`` uses a channel-uniform scale with per-channel offsets,
    which a convolution maps to a per-channel affine shift of its output, so
    the target statistics at the first BN layer undo it exactly.
    ``warped_shift`` adds a nonlinear latent warp on top.
    """
    if preset not in PRESETS:
        raise ContractError(f"unknown preset {preset!r}; expected one of {PRESETS}", stage="generate")
    channels = image_shape[0]
    offsets = [2.0, -1.5, 1.0]
    shift = [offsets[c % len(offsets)] for c in range(channels)]
    common = dict(num_classes=num_classes, image_shape=image_shape, structure_seed=structure_seed)
    source = DomainSpec(name="source", scale=[1.0] * channels, shift=[0.0] * channels, **common)
    target = DomainSpec(
        name="target", scale=[2.5] * channels, shift=shift, warp=(preset == "warped_shift"), **common
    )
    return source, target
