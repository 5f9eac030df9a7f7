"""Dense float64 tensors with reverse-mode automatic differentiation."""

import contextlib
import logging
from contextvars import ContextVar
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import ContractError, NumericDomainError, TapeError


logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

# Per thread and per task; a no_grad block in one thread never affects another.
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def _check_finite(array: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericDomainError(f"{op or 'tensor'} produced non-finite values")


class Tensor:
    """Rank 0-4 float64 array that may take part in a gradient tape.

    Values are treated as immutable once built. The only state that changes
    after construction is ``grad``, which backward passes accumulate into.
    """

    __slots__ = ("data", "grad", "grad_enabled", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, grad_enabled: bool = False):
        array = np.array(data, dtype=np.float64)
        self._init(array, grad_enabled, (), None, "")

    def _init(self, array: np.ndarray, grad_enabled: bool, parents: Tuple["Tensor", ...],
              backward: Optional[BackwardFn], op: str) -> None:
        if array.ndim > 4:
            raise ContractError(f"tensors are rank 0-4, got shape {array.shape}")
        if any(extent == 0 for extent in array.shape):
            raise ContractError(f"tensor extents must be positive, got shape {array.shape}")
        _check_finite(array, op)
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.grad_enabled = grad_enabled
        self._parents = parents
        self._backward = backward
        self._op = op
        self._consumed = False

    @classmethod
    def from_op(cls, array: np.ndarray, parents: Sequence["Tensor"], op: str,
                backward: BackwardFn) -> "Tensor":
        """Wrap an op result, recording it on the tape when any input needs gradients."""
        out = cls.__new__(cls)
        tracked = is_grad_enabled() and any(parent.grad_enabled for parent in parents)
        if tracked:
            out._init(array, True, tuple(parents), backward, op)
        else:
            out._init(array, False, (), None, op)
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-entry tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            grad = grad.reshape(self.data.shape)
        if self.grad is None:
            self.grad = grad.astype(np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    # Operator sugar; the primitives live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad_enabled={self.grad_enabled}, op={self._op or 'leaf'!r})"


class Parameter(Tensor):
    """Leaf tensor owned by a layer or an adaptation state; optimizers update it."""

    __slots__ = ()

    def __init__(self, data, grad_enabled: bool = True):
        super().__init__(data, grad_enabled=grad_enabled)

    def assign(self, values: np.ndarray) -> None:
        """Replace the values in place of an optimizer step."""
        array = np.asarray(values, dtype=np.float64)
        if array.shape != self.data.shape:
            raise ContractError(f"cannot assign shape {array.shape} to parameter of shape {self.shape}")
        _check_finite(array, "parameter update")
        self.data = array.copy()


class Tape:
    """Topologically ordered record of the primitives feeding one scalar loss."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: List[Tensor] = self._topological_order(root)

    @staticmethod
    def _topological_order(root: Tensor) -> List[Tensor]:
        # Iterative DFS; parents are visited in argument order so the
        # traversal (and therefore gradient summation order) is fixed.
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def play(self) -> None:
        """Propagate d(root)/d(node) to every grad-enabled node, once each."""
        for node in self.nodes:
            if not node.is_leaf:
                node.grad = None
        self.root.grad = np.ones_like(self.root.data)
        for node in reversed(self.nodes):
            if node.is_leaf or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, grad in zip(node._parents, grads):
                if grad is None or not parent.grad_enabled:
                    continue
                _check_finite(grad, f"gradient of {node._op}")
                parent._accumulate(grad)


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every grad-enabled ancestor.

    Each loss tensor can be played exactly once; a second call raises TapeError.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.grad_enabled:
        raise ContractError("backward() called on a tensor that is not grad-enabled")
    if loss._consumed:
        raise TapeError("backward() already ran on this tape")
    tape = Tape(loss)
    logger.debug(f"Playing tape with {len(tape.nodes)} nodes")
    tape.play()
    loss._consumed = True
