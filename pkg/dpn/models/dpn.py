"""
Double path encoder, gated cross attention and double path decoder.

Flow names use two letters: the decoder path issuing the query, then the
encoder path providing keys/values (`c` = CNN, `a` = self-attention). So
`ca` is the CNN decoder path attending to the SAN encoder path.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from dpn.autodiff import ops
from dpn.autodiff.tensor import Tensor
from dpn.errors import ContractError
from dpn.models.layers import (
    dot_attention,
    dropout,
    embed,
    feed_forward,
    glu_conv_block,
    layer_norm,
    multi_head_attention,
)
from dpn.models.params import (
    PAD_ID,
    CNNDecoderLayerParams,
    DPNParams,
    GateParams,
    OutputFusionParams,
    SANDecoderLayerParams,
)

logger = logging.getLogger(__name__)

FLOWS = ("cc", "ca", "ac", "aa")


@dataclass
class ForwardTrace:
    """Collects gate activations and decoder->encoder alignments of one forward pass."""

    gates: Dict[str, List[np.ndarray]] = field(
        default_factory=lambda: {"cnn": [], "san": [], "output": []}
    )
    attention: Dict[str, List[np.ndarray]] = field(
        default_factory=lambda: {flow: [] for flow in FLOWS}
    )

    def record_gate(self, kind: str, values: Tensor):
        self.gates[kind].append(values.data[..., 0].copy())

    def record_attention(self, flow: str, weights: Tensor):
        self.attention[flow].append(weights.data.copy())

    def gate_values(self) -> np.ndarray:
        arrays = [g.reshape(-1) for values in self.gates.values() for g in values]
        return np.concatenate(arrays) if arrays else np.zeros(0)

    def alignments(self, layer: int = -1) -> Dict[str, np.ndarray]:
        """Alignment tensors [batch, n, m] of one decoder layer for every flow that ran."""
        return {flow: mats[layer] for flow, mats in self.attention.items() if mats}


@dataclass
class EncoderOutput:
    cnn_states: Optional[Tensor]
    san_states: Optional[Tensor]
    src_mask: np.ndarray

    def states(self, path: str) -> Tensor:
        value = self.cnn_states if path == "c" else self.san_states
        if value is None:
            name = "CNN" if path == "c" else "SAN"
            raise ContractError(f"the {name} encoder path is disabled in this model")
        return value

    def has(self, path: str) -> bool:
        return (self.cnn_states if path == "c" else self.san_states) is not None

    def select(self, index) -> "EncoderOutput":
        index = np.asarray(index, dtype=np.int64)
        pick = lambda t: None if t is None else Tensor(t.data[index])
        return EncoderOutput(pick(self.cnn_states), pick(self.san_states), self.src_mask[index])


def source_mask(src_ids) -> np.ndarray:
    return np.asarray(src_ids) != PAD_ID


def _self_mask(key_mask: np.ndarray) -> np.ndarray:
    # every position may attend to itself so rows of padded queries stay defined
    length = key_mask.shape[1]
    return key_mask[:, None, :] | np.eye(length, dtype=bool)[None]


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))


def encode(
    params: DPNParams,
    src_ids,
    src_mask: Optional[np.ndarray] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> EncoderOutput:
    config = params.config
    src_ids = np.asarray(src_ids, dtype=np.int64)
    mask = source_mask(src_ids) if src_mask is None else np.asarray(src_mask, dtype=bool)
    p = config.dropout

    emb = embed(src_ids, params.src_embed, p, training, rng)

    cnn_states = None
    if config.enc_cnn:
        keep = Tensor(mask[..., None].astype(emb.dtype))
        h = emb
        for layer in params.enc_cnn:
            h = glu_conv_block(ops.mul(h, keep), layer, "same", p, training, rng)
        cnn_states = h

    san_states = None
    if config.enc_san:
        attn_mask = _self_mask(mask)
        x = emb
        for layer in params.enc_san:
            a = multi_head_attention(x, x, x, layer.self_attn, attn_mask)
            x = layer_norm(ops.add(x, dropout(a, p, training, rng)), layer.ln_attn)
            f = feed_forward(x, layer.ffn)
            x = layer_norm(ops.add(x, dropout(f, p, training, rng)), layer.ln_ffn)
        san_states = x

    return EncoderOutput(cnn_states=cnn_states, san_states=san_states, src_mask=mask)


def cross_attention_contexts(
    q_c: Optional[Tensor],
    q_a: Optional[Tensor],
    enc: EncoderOutput,
    trace: Optional[ForwardTrace] = None,
) -> Dict[str, Tensor]:
    """Single dot-product attention of each present decoder query against each encoder path."""
    contexts: Dict[str, Tensor] = {}
    key_mask = enc.src_mask[:, None, :]
    for dec_path, query in (("c", q_c), ("a", q_a)):
        if query is None:
            continue
        for enc_path in ("c", "a"):
            if not enc.has(enc_path):
                continue
            flow = dec_path + enc_path
            ctx, weights = dot_attention(query, enc.states(enc_path), key_mask)
            contexts[flow] = ctx
            if trace is not None:
                trace.record_attention(flow, weights)
    return contexts


def gate_fuse(
    ctx_self: Tensor,
    ctx_cross: Tensor,
    gate: GateParams,
    trace: Optional[ForwardTrace] = None,
    kind: str = "cnn",
) -> Tensor:
    """ctx_self * (1 - g) + ctx_cross * g with g = sigmoid([ctx_self, ctx_cross] W + b), one g per position."""
    g = ops.sigmoid(
        ops.add(ops.matmul(ops.concat_last_dim(ctx_self, ctx_cross), gate.weight), gate.bias)
    )
    if trace is not None:
        trace.record_gate(kind, g)
    one = ops.constant(1.0, like=g)
    return ops.add(ops.mul(ctx_self, ops.sub(one, g)), ops.mul(ctx_cross, g))


def _fused_context(
    query: Tensor,
    dec_path: str,
    gate: Optional[GateParams],
    enc: EncoderOutput,
    trace: Optional[ForwardTrace],
) -> Tensor:
    q_c, q_a = (query, None) if dec_path == "c" else (None, query)
    contexts = cross_attention_contexts(q_c, q_a, enc, trace)
    same, cross = dec_path + dec_path, dec_path + ("a" if dec_path == "c" else "c")
    if same in contexts and cross in contexts:
        if gate is None:
            raise ContractError(f"decoder path '{dec_path}' has two encoder contexts but no gate")
        return gate_fuse(contexts[same], contexts[cross], gate, trace, "cnn" if dec_path == "c" else "san")
    # single encoder path: plain attention
    return next(iter(contexts.values()))


def cnn_decoder_context(
    h: Tensor,
    layer: CNNDecoderLayerParams,
    enc: EncoderOutput,
    trace: Optional[ForwardTrace] = None,
) -> Tensor:
    """Add the fused encoder context to the conv-block output of a CNN decoder layer."""
    return ops.add(h, _fused_context(h, "c", layer.gate, enc, trace))


def san_decoder_tail(
    x: Tensor,
    layer: SANDecoderLayerParams,
    enc: EncoderOutput,
    p: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[ForwardTrace] = None,
) -> Tensor:
    """Encoder-decoder attention and feed-forward sublayers of a SAN decoder layer."""
    ctx = _fused_context(x, "a", layer.gate, enc, trace)
    x = layer_norm(ops.add(x, dropout(ctx, p, training, rng)), layer.ln_ctx)
    f = feed_forward(x, layer.ffn)
    return layer_norm(ops.add(x, dropout(f, p, training, rng)), layer.ln_ffn)


def decode_step_states(
    params: DPNParams,
    tgt_in,
    enc: EncoderOutput,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[ForwardTrace] = None,
) -> Tuple[Optional[Tensor], Optional[Tensor]]:
    """Top states (z_c, z_a) of the two decoder paths for a teacher-forced prefix."""
    config = params.config
    p = config.dropout
    tgt_in = np.asarray(tgt_in, dtype=np.int64)
    emb = embed(tgt_in, params.tgt_embed, p, training, rng)

    z_c = None
    if config.dec_cnn:
        h = emb
        for layer in params.dec_cnn:
            h = glu_conv_block(h, layer.conv, "causal", p, training, rng)
            h = cnn_decoder_context(h, layer, enc, trace)
        z_c = h

    z_a = None
    if config.dec_san:
        mask = causal_mask(tgt_in.shape[1])
        x = emb
        for layer in params.dec_san:
            a = multi_head_attention(x, x, x, layer.self_attn, mask)
            x = layer_norm(ops.add(x, dropout(a, p, training, rng)), layer.ln_self)
            x = san_decoder_tail(x, layer, enc, p, training, rng, trace)
        z_a = x

    return z_c, z_a


def output_fuse_and_project(
    z_c: Optional[Tensor],
    z_a: Optional[Tensor],
    params: OutputFusionParams,
    trace: Optional[ForwardTrace] = None,
) -> Tensor:
    if z_c is None and z_a is None:
        raise ContractError("output fusion needs at least one decoder path output")
    if z_c is not None and z_a is not None:
        if params.gate is None:
            raise ContractError("two decoder paths present but the output gate is missing")
        z = gate_fuse(z_c, z_a, params.gate, trace, "output")
    else:
        z = z_c if z_c is not None else z_a
    logits = ops.add(ops.matmul(z, params.proj_w), params.proj_b)
    return ops.log_softmax_last_dim(logits)


def forward(
    params: DPNParams,
    src_ids,
    tgt_in,
    src_mask: Optional[np.ndarray] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[ForwardTrace] = None,
) -> Tensor:
    """Log-probabilities [batch, time, tgt_vocab] of the next target token at each position."""
    enc = encode(params, src_ids, src_mask, training, rng)
    z_c, z_a = decode_step_states(params, tgt_in, enc, training, rng, trace)
    return output_fuse_and_project(z_c, z_a, params.output, trace)
