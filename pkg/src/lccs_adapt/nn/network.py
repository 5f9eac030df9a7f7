"""Layer compositions with a single classifier head."""

import copy
import logging
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from ..autograd import ops
from ..autograd.tensor import Parameter, Tensor, no_grad
from ..models.architecture import ArchitectureSpec
from ..utils.errors import ContractError
from ..utils.seeding import make_rng
from .layers import BatchNorm, Conv2d, Dense, GlobalAvgPool, Layer, ReLU

logger = logging.getLogger(__name__)

HEAD_KINDS = ("source_linear", "finetuned_linear", "nearest_centroid")
PARAMETER_GROUPS = ("all", "backbone", "bn_affine", "head", "none")

ArrayLike = Union[np.ndarray, Tensor]


class LinearHead:
    """Linear classifier on penultimate features."""

    def __init__(self, in_features: int, num_classes: int, kind: str = "source_linear",
                 rng: Optional[np.random.Generator] = None):
        if kind not in ("source_linear", "finetuned_linear"):
            raise ContractError(f"linear head kind must be source_linear or finetuned_linear, got {kind!r}")
        self.kind = kind
        self.dense = Dense(in_features, num_classes, rng=rng, name="head")
        self.num_classes = num_classes

    @property
    def in_features(self) -> int:
        return self.dense.in_features

    def forward(self, features: Tensor) -> Tensor:
        return self.dense.forward(features)

    def parameters(self) -> List[Tuple[str, Parameter]]:
        return self.dense.parameters()


class CentroidHead:
    """Nearest-centroid classifier: logits_k = -||feature - centroid_k||^2."""

    kind = "nearest_centroid"

    def __init__(self, centroids: np.ndarray):
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.ndim != 2:
            raise ContractError(f"centroids must be (K, D), got shape {centroids.shape}")
        self.centroids = centroids.copy()
        self.num_classes = centroids.shape[0]

    @property
    def in_features(self) -> int:
        return self.centroids.shape[1]

    def forward(self, features: Tensor) -> Tensor:
        return ops.neg_sq_distance(features, self.centroids)

    def parameters(self) -> List[Tuple[str, Parameter]]:
        return []


Head = Union[LinearHead, CentroidHead]


class Network:
    """Ordered feature layers followed by exactly one classifier head."""

    def __init__(self, architecture: ArchitectureSpec, layers: List[Layer], head: Head):
        self.architecture = architecture
        self.layers = list(layers)
        self.head = head
        # Audit record of an LCCS adaptation, set by the adapter.
        self.lccs_record = None

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    @property
    def bn_layers(self) -> List[BatchNorm]:
        return [layer for layer in self.layers if isinstance(layer, BatchNorm)]

    def prepare_input(self, x: ArrayLike) -> Tensor:
        """Coerce x to a tensor of the architecture's input shape (images flatten for mlp)."""
        tensor = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        expected = tuple(self.architecture.input_shape)
        if tensor.ndim >= 2 and tensor.shape[1:] != expected and self.architecture.kind == "mlp":
            if int(np.prod(tensor.shape[1:])) == expected[0]:
                tensor = ops.reshape(tensor, (tensor.shape[0],) + expected)
        if tensor.shape[1:] != expected:
            raise ContractError(f"model expects input (N, {', '.join(map(str, expected))}), got {tensor.shape}")
        return tensor

    def features(self, x: ArrayLike) -> Tensor:
        out = self.prepare_input(x)
        for layer in self.layers:
            out = layer(out)
        if out.ndim != 2 or out.shape[1] != self.head.in_features:
            raise ContractError(f"feature shape {out.shape} does not match head input {self.head.in_features}")
        return out

    def forward(self, x: ArrayLike) -> Tensor:
        return self.head.forward(self.features(x))

    def __call__(self, x: ArrayLike) -> Tensor:
        return self.forward(x)

    def logits(self, x: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
        """Logits without recording a tape, optionally in chunks."""
        x = np.asarray(x, dtype=np.float64)
        with no_grad():
            if batch_size is None or batch_size >= len(x):
                return self.forward(x).numpy()
            chunks = [self.forward(x[start:start + batch_size]).data for start in range(0, len(x), batch_size)]
        return np.concatenate(chunks, axis=0)

    def predict(self, x: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
        """Argmax class per sample; ties go to the lowest class index."""
        return np.argmax(self.logits(x, batch_size), axis=1)

    def set_bn_mode(self, mode: str, blend: float = 1.0) -> None:
        for layer in self.bn_layers:
            layer.set_mode(mode, blend)

    def named_parameters(self, group: str = "all") -> List[Tuple[str, Parameter]]:
        """Parameters by group: all, backbone (non-BN feature layers), bn_affine, head."""
        if group not in PARAMETER_GROUPS:
            raise ContractError(f"unknown parameter group {group!r}; expected one of {PARAMETER_GROUPS}")
        named: List[Tuple[str, Parameter]] = []
        if group in ("all", "backbone", "bn_affine"):
            for layer in self.layers:
                is_bn = isinstance(layer, BatchNorm)
                if group == "all" or (group == "bn_affine") == is_bn:
                    named.extend((f"{layer.name}.{pname}", param) for pname, param in layer.parameters())
        if group in ("all", "head"):
            named.extend((f"head.{pname}", param) for pname, param in self.head.parameters())
        return named

    def parameters(self, group: str = "all") -> List[Parameter]:
        return [param for _, param in self.named_parameters(group)]

    def set_trainable(self, groups: Iterable[str]) -> List[Parameter]:
        """Enable gradients only for the given groups; returns the trainable parameters."""
        groups = set(groups)
        for param in self.parameters("all"):
            param.grad_enabled = False
            param.zero_grad()
        trainable: List[Parameter] = []
        for group in sorted(groups):
            for param in self.parameters(group):
                param.grad_enabled = True
                trainable.append(param)
        return trainable

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def build_network(architecture: ArchitectureSpec, seed: int = 0) -> Network:
    """Seeded He-initialized network for a convnet or mlp architecture."""
    rng = make_rng(seed, "init", architecture.kind)
    layers: List[Layer] = []
    previous = architecture.input_shape[0]
    for index, width in enumerate(architecture.widths):
        if architecture.kind == "convnet":
            layers.append(Conv2d(previous, width, architecture.kernel_size, rng=rng, name=f"conv{index}"))
        else:
            layers.append(Dense(previous, width, bias=False, rng=rng, name=f"dense{index}"))
        layers.append(BatchNorm(width, name=f"bn{index}"))
        layers.append(ReLU(name=f"relu{index}"))
        previous = width
    if architecture.kind == "convnet":
        layers.append(GlobalAvgPool())
    head = LinearHead(architecture.feature_dim, architecture.num_classes, rng=rng)
    logger.debug(f"Built {architecture.kind} with {len(architecture.widths)} BN layers")
    return Network(architecture, layers, head)


def count_lccs_params(model: Network, n: int) -> int:
    """Learnable LCCS scalars: (n + 1) eta plus (n + 1) rho coefficients per BN layer."""
    if n < 1:
        raise ContractError(f"spanning-vector count must be >= 1, got {n}")
    return 2 * (n + 1) * len(model.bn_layers)


def count_bn_affine_params(model: Network) -> int:
    return sum(2 * layer.channels for layer in model.bn_layers)
