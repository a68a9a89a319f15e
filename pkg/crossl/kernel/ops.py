"""Differentiable operations.

Every operation checks shapes exactly: nothing broadcasts, every mismatch
raises ShapeError.
"""

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from crossl.core.errors import (
    ConfigError,
    EmptyAxisError,
    InvalidWindowError,
    LabelError,
    ShapeError,
)
from crossl.kernel.tensor import Tensor


def as_tensor(value: Tensor | np.ndarray | float | Sequence) -> Tensor:
    """Wrap raw data as a constant leaf tensor (tensors pass through)."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _require_rank(name: str, tensor: Tensor, rank: int) -> None:
    if tensor.value.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}, got shape {tensor.shape}")


def _require_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """
    Valid-padding 1D convolution over the time axis.

    Args:
        x: Input [N, T, C_in]
        kernel: Weights [W, C_in, C_out]
        bias: Bias [C_out]
        stride: Step between windows

    Returns:
        Output [N, T_out, C_out] with T_out = floor((T - W) / stride) + 1

    Raises:
        ShapeError: If ranks or channel counts disagree
        InvalidWindowError: If T < W
    """
    _require_rank("conv1d input", x, 3)
    _require_rank("conv1d kernel", kernel, 3)
    _require_rank("conv1d bias", bias, 1)
    if stride < 1:
        raise ConfigError(f"conv1d stride must be >= 1, got {stride}")

    n, t, c_in = x.shape
    width, k_in, c_out = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"conv1d: input has {c_in} channels, kernel expects {k_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} does not match {c_out} output channels")
    if t < width:
        raise InvalidWindowError(f"conv1d: time axis {t} shorter than kernel width {width}")

    t_out = (t - width) // stride + 1
    # [N, T - W + 1, C_in, W] -> every stride-th window
    windows = sliding_window_view(x.value, width, axis=1)[:, ::stride]
    kernel_value = kernel.value
    out = np.einsum("ntcw,wco->nto", windows, kernel_value, optimize=True) + bias.value

    def _backward(grad: np.ndarray):
        d_kernel = np.einsum("ntcw,nto->wco", windows, grad, optimize=True)
        d_bias = grad.sum(axis=(0, 1))
        d_windows = np.einsum("nto,wco->ntcw", grad, kernel_value, optimize=True)
        d_x = np.zeros((n, t, c_in))
        span = stride * (t_out - 1) + 1
        for offset in range(width):
            d_x[:, offset : offset + span : stride, :] += d_windows[:, :, :, offset]
        return d_x, d_kernel, d_bias

    return Tensor.record(out, (x, kernel, bias), _backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Affine map applied row-wise: ``x @ weight + bias``.

    Args:
        x: Input [N, F_in]
        weight: Weights [F_in, F_out]
        bias: Bias [F_out]

    Returns:
        Output [N, F_out]
    """
    _require_rank("dense input", x, 2)
    _require_rank("dense weight", weight, 2)
    _require_rank("dense bias", bias, 1)
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[1]} does not match weight rows {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias shape {bias.shape} does not match {weight.shape[1]} outputs")

    x_value, w_value = x.value, weight.value

    def _backward(grad: np.ndarray):
        return grad @ w_value.T, x_value.T @ grad, grad.sum(axis=0)

    return Tensor.record(x_value @ w_value + bias.value, (x, weight, bias), _backward)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    active = x.value > 0

    def _backward(grad: np.ndarray):
        return (grad * active,)

    return Tensor.record(np.where(active, x.value, 0.0), (x,), _backward)


def global_mean_pool(x: Tensor) -> Tensor:
    """
    Mean over the time axis.

    Args:
        x: Input [N, T, C]

    Returns:
        Output [N, C]

    Raises:
        EmptyAxisError: If T == 0
    """
    _require_rank("global_mean_pool input", x, 3)
    n, t, c = x.shape
    if t == 0:
        raise EmptyAxisError("global_mean_pool over an empty time axis")

    def _backward(grad: np.ndarray):
        return (np.repeat(grad[:, None, :] / t, t, axis=1),)

    return Tensor.record(x.value.mean(axis=1), (x,), _backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a [N, C] array (not differentiable)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """
    Mean negative log-likelihood of the labels under softmax(logits).

    Args:
        logits: Scores [N, C]
        labels: Integer class per row

    Returns:
        Scalar loss; its gradient w.r.t. logits is (softmax - onehot) / N

    Raises:
        ShapeError: If labels do not match the batch size or N == 0
        LabelError: If a label is outside [0, C)
    """
    _require_rank("softmax_cross_entropy logits", logits, 2)
    n, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: labels shape {labels.shape} does not match {n} rows")
    if n == 0:
        raise ShapeError("softmax_cross_entropy needs at least one row")
    if labels.min() < 0 or labels.max() >= c:
        raise LabelError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")

    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(log_norm - shifted[rows, labels])
    probs = np.exp(shifted - log_norm[:, None])

    def _backward(grad: np.ndarray):
        d_logits = probs.copy()
        d_logits[rows, labels] -= 1.0
        return (d_logits * (grad / n),)

    return Tensor.record(np.array(loss), (logits,), _backward)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """
    Stack M tensors of shape [N, K] into [N, M, K].

    Raises:
        ShapeError: If the list is empty or shapes differ
    """
    if not tensors:
        raise ShapeError("stack needs at least one tensor")
    first = tensors[0]
    _require_rank("stack input", first, 2)
    for other in tensors[1:]:
        _require_same("stack", first, other)

    def _backward(grad: np.ndarray):
        return tuple(grad[:, index, :] for index in range(len(tensors)))

    return Tensor.record(np.stack([t.value for t in tensors], axis=1), tuple(tensors), _backward)


def flatten(x: Tensor) -> Tensor:
    """Row-major reshape [N, M, K] -> [N, M*K]."""
    _require_rank("flatten input", x, 3)
    shape = x.shape

    def _backward(grad: np.ndarray):
        return (grad.reshape(shape),)

    return Tensor.record(x.value.reshape(shape[0], -1), (x,), _backward)


def mask_multiply(x: Tensor, mask: np.ndarray) -> Tensor:
    """
    Elementwise product with a constant mask of identical shape.

    Masked (zero) entries receive zero gradient.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match input shape {x.shape}")

    def _backward(grad: np.ndarray):
        return (grad * mask,)

    return Tensor.record(x.value * mask, (x,), _backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equally shaped tensors."""
    _require_same("add", a, b)

    def _backward(grad: np.ndarray):
        return grad, grad

    return Tensor.record(a.value + b.value, (a, b), _backward)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python scalar."""
    factor = float(factor)

    def _backward(grad: np.ndarray):
        return (grad * factor,)

    return Tensor.record(x.value * factor, (x,), _backward)


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element, as a scalar tensor."""
    shape = x.shape

    def _backward(grad: np.ndarray):
        return (np.full(shape, float(grad)),)

    return Tensor.record(np.array(x.value.sum()), (x,), _backward)
