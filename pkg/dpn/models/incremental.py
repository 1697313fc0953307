"""
Step-by-step decoding with cached decoder state.

The CNN decoder path keeps the last r-1 inputs of every layer so each step
convolves a single window; the SAN decoder path keeps every previous layer
input as keys/values. Both reproduce the teacher-forced computation of
`decode_step_states` position by position.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from dpn.autodiff import ops
from dpn.autodiff.tensor import Tensor, no_grad
from dpn.errors import ContractError
from dpn.models.dpn import (
    EncoderOutput,
    cnn_decoder_context,
    output_fuse_and_project,
    san_decoder_tail,
)
from dpn.models.layers import embed, glu, layer_norm, multi_head_attention
from dpn.models.params import DPNParams


@dataclass
class DecoderCache:
    position: int = 0
    cnn_windows: List[np.ndarray] = field(default_factory=list)
    san_inputs: List[np.ndarray] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        for arrays in (self.cnn_windows, self.san_inputs):
            if arrays:
                return arrays[0].shape[0]
        return 0

    def reorder(self, index) -> "DecoderCache":
        """Cache whose row i is row index[i] of this cache (beam reshuffling)."""
        index = np.asarray(index, dtype=np.int64)
        return DecoderCache(
            position=self.position,
            cnn_windows=[w[index] for w in self.cnn_windows],
            san_inputs=[x[index] for x in self.san_inputs],
        )


def start_cache(params: DPNParams, batch_size: int) -> DecoderCache:
    config = params.config
    dtype = np.dtype(config.dtype)
    windows = []
    if config.dec_cnn:
        windows = [
            np.zeros((batch_size, config.kernel - 1, config.d), dtype=dtype)
            for _ in params.dec_cnn
        ]
    inputs = []
    if config.dec_san:
        inputs = [np.zeros((batch_size, 0, config.d), dtype=dtype) for _ in params.dec_san]
    return DecoderCache(position=0, cnn_windows=windows, san_inputs=inputs)


def decode_step(
    params: DPNParams,
    enc: EncoderOutput,
    tokens,
    cache: DecoderCache,
) -> Tuple[np.ndarray, DecoderCache]:
    """Log-probabilities [batch, tgt_vocab] of the token after `tokens`, and the advanced cache."""
    tokens = np.asarray(tokens, dtype=np.int64).reshape(-1, 1)
    if enc.src_mask.shape[0] != tokens.shape[0]:
        raise ContractError(
            f"decode_step batch {tokens.shape[0]} != encoder batch {enc.src_mask.shape[0]}"
        )
    config = params.config

    with no_grad():
        emb = embed(tokens, params.tgt_embed, offset=cache.position)

        z_c: Optional[Tensor] = None
        new_windows = []
        if config.dec_cnn:
            h = emb
            for layer, window in zip(params.dec_cnn, cache.cnn_windows):
                full = np.concatenate([window, h.data], axis=1)
                conv = ops.conv1d(Tensor(full), layer.conv.filter, layer.conv.bias, "valid")
                h = cnn_decoder_context(ops.add(glu(conv), h), layer, enc)
                new_windows.append(full[:, 1:])
            z_c = h

        z_a: Optional[Tensor] = None
        new_inputs = []
        if config.dec_san:
            x = emb
            for layer, previous in zip(params.dec_san, cache.san_inputs):
                keys = np.concatenate([previous, x.data], axis=1)
                keys_t = Tensor(keys)
                a = multi_head_attention(x, keys_t, keys_t, layer.self_attn)
                y = layer_norm(ops.add(x, a), layer.ln_self)
                new_inputs.append(keys)
                x = san_decoder_tail(y, layer, enc)
            z_a = x

        log_probs = output_fuse_and_project(z_c, z_a, params.output)

    cache = DecoderCache(
        position=cache.position + 1, cnn_windows=new_windows, san_inputs=new_inputs
    )
    return log_probs.data[:, 0, :], cache
