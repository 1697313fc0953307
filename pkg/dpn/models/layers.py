"""
Layers built from the autodiff primitives.

All functions are pure in (input, parameters, rng); dropout draws from the
numpy Generator it is handed and is the identity outside training.
"""

import math
from typing import Optional, Tuple

import numpy as np

from dpn.autodiff import ops
from dpn.autodiff.tensor import Tensor
from dpn.errors import ConfigError, DimensionError, LengthError, VocabularyError
from dpn.models.params import (
    AttentionParams,
    ConvLayerParams,
    EmbeddingParams,
    FeedForwardParams,
    LayerNormParams,
)


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng stream")
    keep = rng.random(x.shape) >= p
    return ops.mul(x, Tensor((keep / (1.0 - p)).astype(x.dtype)))


def embed(
    tokens,
    params: EmbeddingParams,
    dropout_p: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    offset: int = 0,
) -> Tensor:
    """Word embedding plus learned position embedding of positions offset..offset+time-1."""
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 2:
        raise DimensionError(f"embed expects ids [batch,time], got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= params.vocab_size):
        raise VocabularyError(
            f"token id out of range [0, {params.vocab_size}): "
            f"min={int(ids.min())} max={int(ids.max())}"
        )
    time = ids.shape[1]
    if offset + time > params.max_len:
        raise LengthError(
            f"sequence length {offset + time} exceeds max_len={params.max_len}"
        )
    words = ops.gather_rows(params.word, ids)
    positions = ops.gather_rows(params.position, np.arange(offset, offset + time))
    return dropout(ops.add(words, positions), dropout_p, training, rng)


def glu(x: Tensor) -> Tensor:
    """Gated linear unit: split 2d into halves a, b and return a * sigmoid(b)."""
    width = x.shape[-1]
    if width % 2:
        raise DimensionError(f"GLU input width must be even, got {width}")
    half = width // 2
    a = ops.slice_last_dim(x, 0, half)
    b = ops.slice_last_dim(x, half, width)
    return ops.mul(a, ops.sigmoid(b))


def glu_conv_block(
    h: Tensor,
    params: ConvLayerParams,
    mode: str = "same",
    dropout_p: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    if h.shape[-1] != params.d:
        raise DimensionError(f"conv block expects width {params.d}, got {h.shape[-1]}")
    x = dropout(h, dropout_p, training, rng)
    return ops.add(glu(ops.conv1d(x, params.filter, params.bias, mode)), h)


def _heads(x: Tensor, heads: int) -> Tensor:
    batch, time, d = x.shape
    return ops.swap_axes(ops.reshape(x, (batch, time, heads, d // heads)), 1, 2)


def _merge_heads(x: Tensor) -> Tensor:
    batch, heads, time, head_dim = x.shape
    return ops.reshape(ops.swap_axes(x, 1, 2), (batch, time, heads * head_dim))


def _attention_mask(mask, batch: int, tq: int, tk: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    try:
        return np.broadcast_to(mask, (batch, tq, tk))
    except ValueError:
        raise DimensionError(
            f"attention mask shape {mask.shape} does not fit [batch={batch}, {tq}, {tk}]"
        ) from None


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: AttentionParams,
    mask=None,
) -> Tensor:
    """
    Scaled multi-head attention.

    Each head attends with queries projected and divided by sqrt(d_s); head
    outputs are concatenated and mixed by the output projection. `mask` is a
    boolean array broadcastable to [batch, t_q, t_k], True where attending is
    allowed.
    """
    d = params.d
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.shape[-1] != d:
            raise DimensionError(f"attention {name} width {t.shape[-1]} != d={d}")
    if k.shape[1] != v.shape[1]:
        raise DimensionError(f"keys ({k.shape[1]}) and values ({v.shape[1]}) differ in length")

    batch, tq, tk = q.shape[0], q.shape[1], k.shape[1]
    queries = _heads(ops.scale(ops.matmul(q, params.wq), 1.0 / math.sqrt(params.head_dim)), params.heads)
    keys = _heads(ops.matmul(k, params.wk), params.heads)
    values = _heads(ops.matmul(v, params.wv), params.heads)

    scores = ops.matmul(queries, ops.swap_axes(keys, -1, -2))
    head_mask = None
    if mask is not None:
        head_mask = _attention_mask(mask, batch, tq, tk)[:, None, :, :]
    weights = ops.softmax_last_dim(scores, head_mask)
    return ops.matmul(_merge_heads(ops.matmul(weights, values)), params.wo)


def dot_attention(q: Tensor, kv: Tensor, mask=None) -> Tuple[Tensor, Tensor]:
    """Single dot-product attention softmax(q kv^T) kv; returns (context, weights)."""
    if q.shape[-1] != kv.shape[-1]:
        raise DimensionError(f"query width {q.shape[-1]} != key width {kv.shape[-1]}")
    scores = ops.matmul(q, ops.swap_axes(kv, -1, -2))
    if mask is not None:
        mask = _attention_mask(mask, q.shape[0], q.shape[1], kv.shape[1])
    weights = ops.softmax_last_dim(scores, mask)
    return ops.matmul(weights, kv), weights


def feed_forward(x: Tensor, params: FeedForwardParams) -> Tensor:
    hidden = ops.relu(ops.add(ops.matmul(x, params.w1), params.b1))
    return ops.add(ops.matmul(hidden, params.w2), params.b2)


def layer_norm(x: Tensor, params: LayerNormParams) -> Tensor:
    if x.shape[-1] != params.gain.shape[0]:
        raise DimensionError(f"layer norm width {params.gain.shape[0]} != input {x.shape[-1]}")
    normed = ops.standardize_last_dim(x, params.eps)
    return ops.add(ops.mul(normed, params.gain), params.bias)
