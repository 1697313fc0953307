"""
Differentiable primitives.

Each function computes its forward value with numpy and registers a backward
rule through `Tensor.from_op`. Broadcasting follows numpy; gradients of
broadcast operands are summed back over the broadcast axes.
"""

from typing import Optional, Sequence

import numpy as np

from dpn.autodiff.tensor import Tensor
from dpn.errors import DimensionError, InvalidMaskError

ELEMENTWISE_KINDS = ("add", "sub", "mul")
ACTIVATION_KINDS = ("sigmoid", "relu")
PADDING_MODES = ("same", "causal", "valid")


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op_name: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op_name}: shapes {a.shape} and {b.shape} are not broadcastable"
        ) from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(
            f"matmul batch dimensions differ: {a.shape} @ {b.shape}"
        ) from None

    a_data, b_data = a.data, b.data

    def backward_fn(grad):
        grad_a = unbroadcast(grad @ np.swapaxes(b_data, -1, -2), a_data.shape)
        grad_b = unbroadcast(np.swapaxes(a_data, -1, -2) @ grad, b_data.shape)
        return grad_a, grad_b

    return Tensor.from_op(a_data @ b_data, (a, b), backward_fn, "matmul")


def elementwise(kind: str, a: Tensor, b: Tensor) -> Tensor:
    if kind not in ELEMENTWISE_KINDS:
        raise ValueError(f"Unknown elementwise kind: {kind}. Use one of {ELEMENTWISE_KINDS}")
    _broadcast_shape(a, b, kind)
    a_data, b_data = a.data, b.data

    if kind == "add":
        out = a_data + b_data

        def backward_fn(grad):
            return unbroadcast(grad, a_data.shape), unbroadcast(grad, b_data.shape)

    elif kind == "sub":
        out = a_data - b_data

        def backward_fn(grad):
            return unbroadcast(grad, a_data.shape), unbroadcast(-grad, b_data.shape)

    else:
        out = a_data * b_data

        def backward_fn(grad):
            return (
                unbroadcast(grad * b_data, a_data.shape),
                unbroadcast(grad * a_data, b_data.shape),
            )

    return Tensor.from_op(out, (a, b), backward_fn, kind)


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("mul", a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward_fn(grad):
        return (grad * factor,)

    return Tensor.from_op(a.data * factor, (a,), backward_fn, "scale")


def activation(kind: str, a: Tensor) -> Tensor:
    if kind == "sigmoid":
        # exp of a non-positive argument only, so large |x| never overflows
        x = a.data
        e = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)

        def backward_fn(grad):
            return (grad * out * (1.0 - out),)

    elif kind == "relu":
        positive = a.data > 0
        out = np.where(positive, a.data, 0).astype(a.dtype, copy=False)

        def backward_fn(grad):
            return (grad * positive,)

    else:
        raise ValueError(f"Unknown activation kind: {kind}. Use one of {ACTIVATION_KINDS}")

    return Tensor.from_op(out, (a,), backward_fn, kind)


def sigmoid(a: Tensor) -> Tensor:
    return activation("sigmoid", a)


def relu(a: Tensor) -> Tensor:
    return activation("relu", a)


def _check_mask(a: Tensor, mask) -> np.ndarray:
    mask = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=bool)
    try:
        mask = np.broadcast_to(mask, a.shape)
    except ValueError:
        raise DimensionError(
            f"mask shape {mask.shape} does not match scores {a.shape}"
        ) from None
    if not mask.any(axis=-1).all():
        raise InvalidMaskError("softmax row has every position masked out")
    return mask


def softmax_last_dim(a: Tensor, mask=None) -> Tensor:
    """Row softmax over the last axis; `mask` marks the positions that are kept."""
    scores = a.data
    if mask is not None:
        keep = _check_mask(a, mask)
        scores = np.where(keep, scores, -np.inf)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)

    def backward_fn(grad):
        inner = (grad * out).sum(axis=-1, keepdims=True)
        return (out * (grad - inner),)

    return Tensor.from_op(out, (a,), backward_fn, "softmax")


def log_softmax_last_dim(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def backward_fn(grad):
        return (grad - probs * grad.sum(axis=-1, keepdims=True),)

    return Tensor.from_op(out, (a,), backward_fn, "log_softmax")


def conv1d(x: Tensor, filt: Tensor, bias: Tensor, padding: str = "same") -> Tensor:
    """
    One-dimensional convolution over time.

    x is [batch, time, d_in] and filt is [r*d_in, d_out]; row block k of the
    filter multiplies the k-th element of each window. `same` pads (r-1)/2
    zeros on both sides, `causal` pads r-1 zeros on the left, `valid` pads
    nothing and returns time-r+1 positions.
    """
    if padding not in PADDING_MODES:
        raise ValueError(f"Unknown padding mode: {padding}. Use one of {PADDING_MODES}")
    if x.ndim != 3 or filt.ndim != 2:
        raise DimensionError(
            f"conv1d expects x [batch,time,d_in] and filter [r*d_in,d_out], "
            f"got {x.shape} and {filt.shape}"
        )
    batch, time, d_in = x.shape
    if d_in == 0 or filt.shape[0] % d_in != 0 or filt.shape[0] == 0:
        raise DimensionError(
            f"conv1d filter rows {filt.shape[0]} are not a multiple of input width {d_in}"
        )
    r = filt.shape[0] // d_in
    d_out = filt.shape[1]
    if bias.shape != (d_out,):
        raise DimensionError(f"conv1d bias shape {bias.shape} does not match d_out={d_out}")

    if padding == "same":
        if r % 2 == 0:
            raise DimensionError(f"same padding needs an odd kernel, got r={r}")
        left = right = (r - 1) // 2
    elif padding == "causal":
        left, right = r - 1, 0
    else:
        left = right = 0

    padded = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    steps = padded.shape[1] - r + 1
    if steps <= 0:
        out_shape = (batch, 0, d_out)
        return Tensor.from_op(
            np.zeros(out_shape, dtype=x.dtype),
            (x, filt, bias),
            lambda grad: (np.zeros_like(x.data), np.zeros_like(filt.data), np.zeros_like(bias.data)),
            "conv1d",
        )
    windows = np.lib.stride_tricks.sliding_window_view(padded, r, axis=1)
    # [batch, steps, d_in, r] -> [batch, steps, r, d_in] -> concatenated window
    cols = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(batch, steps, r * d_in)
    w = filt.data
    out = cols @ w + bias.data

    def backward_fn(grad):
        grad_w = cols.reshape(-1, r * d_in).T @ grad.reshape(-1, d_out)
        grad_b = grad.sum(axis=(0, 1))
        grad_cols = (grad @ w.T).reshape(batch, steps, r, d_in)
        grad_padded = np.zeros_like(padded)
        for k in range(r):
            grad_padded[:, k : k + steps, :] += grad_cols[:, :, k, :]
        grad_x = grad_padded[:, left : left + time, :]
        return grad_x, grad_w, grad_b

    return Tensor.from_op(out, (x, filt, bias), backward_fn, "conv1d")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise DimensionError(
                f"concat along axis {axis}: shapes "
                f"{[tuple(t.shape) for t in tensors]} disagree off that axis"
            )
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward_fn(grad):
        pieces = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            index = [slice(None)] * grad.ndim
            index[axis] = slice(start, stop)
            pieces.append(grad[tuple(index)])
        return pieces

    return Tensor.from_op(out, tuple(tensors), backward_fn, "concat")


def concat_last_dim(a: Tensor, b: Tensor) -> Tensor:
    return concat([a, b], axis=-1)


def slice_last_dim(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[..., start:stop]

    def backward_fn(grad):
        full = np.zeros_like(a.data)
        full[..., start:stop] = grad
        return (full,)

    return Tensor.from_op(out, (a,), backward_fn, "slice")


def reshape(a: Tensor, shape) -> Tensor:
    original = a.shape

    def backward_fn(grad):
        return (grad.reshape(original),)

    return Tensor.from_op(a.data.reshape(shape), (a,), backward_fn, "reshape")


def swap_axes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    def backward_fn(grad):
        return (np.swapaxes(grad, axis1, axis2),)

    return Tensor.from_op(np.swapaxes(a.data, axis1, axis2), (a,), backward_fn, "swap_axes")


def sum_all(a: Tensor) -> Tensor:
    def backward_fn(grad):
        return (np.broadcast_to(grad, a.shape).copy(),)

    return Tensor.from_op(np.asarray(a.data.sum()), (a,), backward_fn, "sum")


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row lookup `table[ids]`; repeated ids accumulate their gradients."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def backward_fn(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), grad.reshape(-1, table.shape[-1]))
        return (full,)

    return Tensor.from_op(out, (table,), backward_fn, "gather_rows")


def pick_last_dim(a: Tensor, ids) -> Tensor:
    """out[..., ] = a[..., ids[...]] for integer ids shaped like a without its last axis."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != a.shape[:-1]:
        raise DimensionError(f"pick ids shape {ids.shape} does not match {a.shape[:-1]}")
    expanded = ids[..., None]
    out = np.take_along_axis(a.data, expanded, axis=-1)[..., 0]

    def backward_fn(grad):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, expanded, grad[..., None], axis=-1)
        return (full,)

    return Tensor.from_op(out, (a,), backward_fn, "pick")


def standardize_last_dim(x: Tensor, eps: float) -> Tensor:
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    out = centered * inv_std

    def backward_fn(grad):
        g_mean = grad.mean(axis=-1, keepdims=True)
        gy_mean = (grad * out).mean(axis=-1, keepdims=True)
        return (inv_std * (grad - g_mean - out * gy_mean),)

    return Tensor.from_op(out, (x,), backward_fn, "standardize")


def constant(value, like: Optional[Tensor] = None, dtype=None) -> Tensor:
    if like is not None and dtype is None:
        dtype = like.dtype
    return Tensor(np.asarray(value, dtype=dtype))
