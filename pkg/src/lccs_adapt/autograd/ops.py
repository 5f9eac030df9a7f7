"""Differentiable primitives over Tensor.

Forward kernels that mix values within a sample (matmul, conv2d, spatial
means, centroid distances) accumulate in a fixed sequential order, so the
result for one sample depends only on that sample's values. That is what
makes eval-mode predictions bit-identical whatever the batch composition.
"""

from typing import Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..utils.errors import ContractError, NumericDomainError
from .tensor import Tensor

Operand = Union[Tensor, float, int]

ELEMENTWISE_KINDS = ("add", "sub", "mul", "div", "max_with_scalar")


def _is_scalar(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ContractError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _require_tensor(value, op: str) -> Tensor:
    if not isinstance(value, Tensor):
        raise ContractError(f"{op}: expected a Tensor, got {type(value).__name__}")
    return value


# ----------------------------------------------------------------- elementwise

def add(a: Tensor, b: Operand) -> Tensor:
    a = _require_tensor(a, "add")
    if _is_scalar(b):
        return Tensor.from_op(a.data + float(b), (a,), "add", lambda g: (g,))
    b = _require_tensor(b, "add")
    _check_same_shape(a, b, "add")
    return Tensor.from_op(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Tensor, b: Operand) -> Tensor:
    a = _require_tensor(a, "sub")
    if _is_scalar(b):
        return Tensor.from_op(a.data - float(b), (a,), "sub", lambda g: (g,))
    b = _require_tensor(b, "sub")
    _check_same_shape(a, b, "sub")
    return Tensor.from_op(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b: Operand) -> Tensor:
    a = _require_tensor(a, "mul")
    if _is_scalar(b):
        scale = float(b)
        return Tensor.from_op(a.data * scale, (a,), "mul", lambda g: (g * scale,))
    b = _require_tensor(b, "mul")
    _check_same_shape(a, b, "mul")
    a_data, b_data = a.data, b.data
    return Tensor.from_op(a_data * b_data, (a, b), "mul", lambda g: (g * b_data, g * a_data))


def div(a: Tensor, b: Operand) -> Tensor:
    a = _require_tensor(a, "div")
    if _is_scalar(b):
        divisor = float(b)
        if divisor == 0.0:
            raise NumericDomainError("div: division by zero")
        return Tensor.from_op(a.data / divisor, (a,), "div", lambda g: (g / divisor,))
    b = _require_tensor(b, "div")
    _check_same_shape(a, b, "div")
    if np.any(b.data == 0.0):
        raise NumericDomainError("div: divisor has zero entries")
    a_data, b_data = a.data, b.data
    out = a_data / b_data
    return Tensor.from_op(out, (a, b), "div", lambda g: (g / b_data, -g * out / b_data))


def maximum(a: Tensor, floor: float) -> Tensor:
    """Entrywise max(a, floor); gradient passes only where a > floor."""
    a = _require_tensor(a, "max_with_scalar")
    if not _is_scalar(floor):
        raise ContractError("max_with_scalar: the second operand must be a scalar")
    floor = float(floor)
    mask = a.data > floor
    return Tensor.from_op(np.where(mask, a.data, floor), (a,), "max_with_scalar", lambda g: (g * mask,))


def relu(a: Tensor) -> Tensor:
    return maximum(a, 0.0)


def elementwise(op_kind: str, a: Tensor, b: Operand) -> Tensor:
    """Dispatch one of the elementwise kinds by name."""
    if op_kind == "add":
        return add(a, b)
    if op_kind == "sub":
        return sub(a, b)
    if op_kind == "mul":
        return mul(a, b)
    if op_kind == "div":
        return div(a, b)
    if op_kind == "max_with_scalar":
        return maximum(a, b)
    raise ContractError(f"unknown elementwise op {op_kind!r}; expected one of {ELEMENTWISE_KINDS}")


def sqrt(a: Tensor) -> Tensor:
    a = _require_tensor(a, "sqrt")
    if np.any(a.data < 0.0):
        raise NumericDomainError("sqrt: negative entries")
    out = np.sqrt(a.data)

    def backward(g):
        if np.any(out == 0.0):
            raise NumericDomainError("sqrt: gradient undefined at zero")
        return (g * 0.5 / out,)

    return Tensor.from_op(out, (a,), "sqrt", backward)


def square(a: Tensor) -> Tensor:
    return mul(a, a)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = _require_tensor(a, "reshape")
    shape = tuple(int(extent) for extent in shape)
    if int(np.prod(shape)) != a.size:
        raise ContractError(f"reshape: cannot view {a.shape} as {shape}")
    original = a.shape
    return Tensor.from_op(a.data.reshape(shape).copy(), (a,), "reshape", lambda g: (g.reshape(original),))


def sum_all(a: Tensor) -> Tensor:
    a = _require_tensor(a, "sum")
    original = a.shape
    return Tensor.from_op(np.array(a.data.sum()), (a,), "sum", lambda g: (np.full(original, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    return mul(sum_all(a), 1.0 / a.size)


# ------------------------------------------------------------- dense products

def ordered_matmul(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Row-independent a @ w, accumulating over the inner index in order."""
    out = np.zeros((a.shape[0], w.shape[1]), dtype=np.float64)
    for j in range(a.shape[1]):
        out += a[:, j:j + 1] * w[j:j + 1, :]
    return out


def matmul(a: Tensor, w: Tensor) -> Tensor:
    """(N, D) x (D, K) -> (N, K)."""
    a = _require_tensor(a, "matmul")
    w = _require_tensor(w, "matmul")
    if a.ndim != 2 or w.ndim != 2:
        raise ContractError(f"matmul: rank-2 operands required, got {a.shape} and {w.shape}")
    if a.shape[1] != w.shape[0]:
        raise ContractError(f"matmul: inner dimensions differ, {a.shape} x {w.shape}")
    a_data, w_data = a.data, w.data

    def backward(g):
        grad_a = ordered_matmul(g, w_data.T) if a.grad_enabled else None
        grad_w = a_data.T @ g if w.grad_enabled else None
        return grad_a, grad_w

    return Tensor.from_op(ordered_matmul(a_data, w_data), (a, w), "matmul", backward)


def conv2d(x: Tensor, kernels: Tensor) -> Tensor:
    """Valid, stride-1 cross-correlation: (N,Cin,H,W) * (Cout,Cin,kh,kw)."""
    x = _require_tensor(x, "conv2d")
    kernels = _require_tensor(kernels, "conv2d")
    if x.ndim != 4 or kernels.ndim != 4:
        raise ContractError(f"conv2d: rank-4 operands required, got {x.shape} and {kernels.shape}")
    n, c_in, height, width = x.shape
    c_out, k_in, kh, kw = kernels.shape
    if k_in != c_in:
        raise ContractError(f"conv2d: kernel expects {k_in} input channels, input has {c_in}")
    if kh > height or kw > width:
        raise ContractError(f"conv2d: kernel {kh}x{kw} larger than input {height}x{width}")
    out_h, out_w = height - kh + 1, width - kw + 1

    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * out_h * out_w, c_in * kh * kw)
    weight = kernels.data.reshape(c_out, c_in * kh * kw).T
    out = ordered_matmul(cols, weight).reshape(n, out_h, out_w, c_out).transpose(0, 3, 1, 2)

    def backward(g):
        g_cols = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, c_out)
        grad_kernels = None
        if kernels.grad_enabled:
            grad_kernels = (cols.T @ g_cols).T.reshape(c_out, c_in, kh, kw)
        grad_x = None
        if x.grad_enabled:
            d_cols = ordered_matmul(g_cols, weight.T).reshape(n, out_h, out_w, c_in, kh, kw)
            grad_x = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    grad_x[:, :, i:i + out_h, j:j + out_w] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return grad_x, grad_kernels

    return Tensor.from_op(np.ascontiguousarray(out), (x, kernels), "conv2d", backward)


# ----------------------------------------------------- per-channel primitives

def _channel_axes(ndim: int) -> Tuple[int, ...]:
    return (0,) + tuple(range(2, ndim))


def _channel_view(vector: np.ndarray, ndim: int) -> np.ndarray:
    return vector.reshape((1, -1) + (1,) * (ndim - 2))


def _check_channel_operand(z: Tensor, v: Tensor, op: str) -> None:
    if z.ndim not in (2, 4):
        raise ContractError(f"{op}: expected rank-2 or rank-4 input, got {z.shape}")
    if v.shape != (z.shape[1],):
        raise ContractError(f"{op}: per-channel operand shape {v.shape} does not match {z.shape[1]} channels")


def channel_mean(z: Tensor) -> Tensor:
    """Mean over every axis but the channel axis: (N,C[,H,W]) -> (C,)."""
    z = _require_tensor(z, "channel_mean")
    if z.ndim not in (2, 4):
        raise ContractError(f"channel_mean: expected rank-2 or rank-4 input, got {z.shape}")
    axes = _channel_axes(z.ndim)
    count = z.size // z.shape[1]
    shape, ndim = z.shape, z.ndim
    return Tensor.from_op(
        z.data.mean(axis=axes), (z,), "channel_mean",
        lambda g: (np.broadcast_to(_channel_view(g, ndim) / count, shape).copy(),),
    )


def channel_center(z: Tensor, mu: Tensor) -> Tensor:
    """z - mu[c]."""
    _check_channel_operand(z, mu, "channel_center")
    axes = _channel_axes(z.ndim)
    return Tensor.from_op(
        z.data - _channel_view(mu.data, z.ndim), (z, mu), "channel_center",
        lambda g: (g, -g.sum(axis=axes)),
    )


def channel_divide(z: Tensor, sigma: Tensor) -> Tensor:
    """z / sigma[c]."""
    _check_channel_operand(z, sigma, "channel_divide")
    if np.any(sigma.data == 0.0):
        raise NumericDomainError("channel_divide: zero standard deviation")
    axes = _channel_axes(z.ndim)
    view = _channel_view(sigma.data, z.ndim)
    out = z.data / view
    return Tensor.from_op(
        out, (z, sigma), "channel_divide",
        lambda g: (g / view, -(g * out).sum(axis=axes) / sigma.data),
    )


def channel_scale(z: Tensor, gamma: Tensor) -> Tensor:
    """z * gamma[c]."""
    _check_channel_operand(z, gamma, "channel_scale")
    axes = _channel_axes(z.ndim)
    view = _channel_view(gamma.data, z.ndim)
    z_data = z.data
    return Tensor.from_op(
        z_data * view, (z, gamma), "channel_scale",
        lambda g: (g * view, (g * z_data).sum(axis=axes)),
    )


def channel_shift(z: Tensor, beta: Tensor) -> Tensor:
    """z + beta[c]."""
    _check_channel_operand(z, beta, "channel_shift")
    axes = _channel_axes(z.ndim)
    return Tensor.from_op(
        z.data + _channel_view(beta.data, z.ndim), (z, beta), "channel_shift",
        lambda g: (g, g.sum(axis=axes)),
    )


# ------------------------------------------------------------- spatial / heads

def spatial_mean(x: Tensor) -> Tensor:
    """Global average pool (N,C,H,W) -> (N,C), summing positions in order."""
    x = _require_tensor(x, "spatial_mean")
    if x.ndim != 4:
        raise ContractError(f"spatial_mean: expected rank-4 input, got {x.shape}")
    n, c, height, width = x.shape
    total = np.zeros((n, c), dtype=np.float64)
    for i in range(height):
        for j in range(width):
            total += x.data[:, :, i, j]
    count = height * width
    return Tensor.from_op(
        total / count, (x,), "spatial_mean",
        lambda g: (np.broadcast_to(g[:, :, None, None] / count, x.shape).copy(),),
    )


def neg_sq_distance(features: Tensor, centroids: np.ndarray) -> Tensor:
    """logits[i, k] = -||features[i] - centroids[k]||^2."""
    features = _require_tensor(features, "neg_sq_distance")
    centroids = np.asarray(centroids, dtype=np.float64)
    if features.ndim != 2 or centroids.ndim != 2 or features.shape[1] != centroids.shape[1]:
        raise ContractError(f"neg_sq_distance: features {features.shape} vs centroids {centroids.shape}")
    f = features.data
    diffs = [f - centroids[k] for k in range(centroids.shape[0])]
    logits = np.zeros((f.shape[0], centroids.shape[0]), dtype=np.float64)
    for k, diff in enumerate(diffs):
        for d in range(f.shape[1]):
            logits[:, k] -= diff[:, d] * diff[:, d]

    def backward(g):
        grad = np.zeros_like(f)
        for k, diff in enumerate(diffs):
            grad -= 2.0 * g[:, k:k + 1] * diff
        return (grad,)

    return Tensor.from_op(logits, (features,), "neg_sq_distance", backward)
