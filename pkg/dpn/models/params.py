"""
Parameter bundles of the double path network.

Bundles are plain dataclasses of `Tensor` leaves. `named_parameters` walks
them in declaration order and produces the hierarchical names used by
checkpoints (for example `decoder.san.0.gate.weight`).
"""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from dpn.autodiff.tensor import Tensor
from dpn.config.schema import ModelConfig
from dpn.errors import CheckpointError

PAD_ID = 0


class ParamBundle:
    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        return list(_walk(self, prefix))

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters())


def _walk(obj, prefix: str) -> Iterator[Tuple[str, Tensor]]:
    join = (lambda name: f"{prefix}.{name}") if prefix else (lambda name: name)
    for f in dataclasses.fields(obj):
        if not f.metadata.get("param", True):
            continue
        value = getattr(obj, f.name)
        if isinstance(value, Tensor):
            yield join(f.name), value
        elif isinstance(value, ParamBundle):
            yield from _walk(value, join(f.name))
        elif isinstance(value, list):
            for i, item in enumerate(value):
                yield from _walk(item, join(f"{f.name}.{i}"))


def _meta():
    return field(metadata={"param": False})


@dataclass
class EmbeddingParams(ParamBundle):
    word: Tensor
    position: Tensor

    @property
    def vocab_size(self) -> int:
        return self.word.shape[0]

    @property
    def max_len(self) -> int:
        return self.position.shape[0]


@dataclass
class ConvLayerParams(ParamBundle):
    filter: Tensor
    bias: Tensor

    @property
    def d(self) -> int:
        return self.bias.shape[0] // 2

    @property
    def kernel(self) -> int:
        return self.filter.shape[0] // self.d


@dataclass
class AttentionParams(ParamBundle):
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int = _meta()

    @property
    def d(self) -> int:
        return self.wq.shape[0]

    @property
    def head_dim(self) -> int:
        return self.d // self.heads


@dataclass
class FeedForwardParams(ParamBundle):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class LayerNormParams(ParamBundle):
    gain: Tensor
    bias: Tensor
    eps: float = _meta()


@dataclass
class GateParams(ParamBundle):
    """One half of a fusion gate: weight over [ctx_self, ctx_cross] (2d -> 1) and a scalar bias."""

    weight: Tensor
    bias: Tensor


@dataclass
class SANEncoderLayerParams(ParamBundle):
    self_attn: AttentionParams
    ln_attn: LayerNormParams
    ffn: FeedForwardParams
    ln_ffn: LayerNormParams


@dataclass
class CNNDecoderLayerParams(ParamBundle):
    conv: ConvLayerParams
    gate: Optional[GateParams] = None


@dataclass
class SANDecoderLayerParams(ParamBundle):
    self_attn: AttentionParams
    ln_self: LayerNormParams
    ln_ctx: LayerNormParams
    ffn: FeedForwardParams
    ln_ffn: LayerNormParams
    gate: Optional[GateParams] = None


@dataclass
class OutputFusionParams(ParamBundle):
    proj_w: Tensor
    proj_b: Tensor
    gate: Optional[GateParams] = None


@dataclass
class DPNParams(ParamBundle):
    config: ModelConfig = _meta()
    src_embed: EmbeddingParams = None
    tgt_embed: EmbeddingParams = None
    enc_cnn: List[ConvLayerParams] = field(default_factory=list)
    enc_san: List[SANEncoderLayerParams] = field(default_factory=list)
    dec_cnn: List[CNNDecoderLayerParams] = field(default_factory=list)
    dec_san: List[SANDecoderLayerParams] = field(default_factory=list)
    output: OutputFusionParams = None

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        groups = [
            ("encoder.embed", self.src_embed),
            ("decoder.embed", self.tgt_embed),
        ]
        named: List[Tuple[str, Tensor]] = []
        for name, bundle in groups:
            named.extend(bundle.named_parameters(name))
        for tag, layers in (
            ("encoder.cnn", self.enc_cnn),
            ("encoder.san", self.enc_san),
            ("decoder.cnn", self.dec_cnn),
            ("decoder.san", self.dec_san),
        ):
            for i, layer in enumerate(layers):
                named.extend(layer.named_parameters(f"{tag}.{i}"))
        named.extend(self.output.named_parameters("output"))
        return named

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        named = dict(self.named_parameters())
        missing = sorted(set(named) - set(state))
        unexpected = sorted(set(state) - set(named))
        if missing or unexpected:
            raise CheckpointError(
                f"Parameter set mismatch. Missing: {missing[:5]} Unexpected: {unexpected[:5]}"
            )
        for name, tensor in named.items():
            value = state[name]
            if value.shape != tensor.shape:
                raise CheckpointError(
                    f"Shape mismatch for {name}: checkpoint {value.shape}, model {tensor.shape}"
                )
            tensor.data = np.array(value, dtype=tensor.dtype)

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None


class _Init:
    def __init__(self, seed: int, dtype: str):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)

    def normal(self, shape, std: float) -> Tensor:
        data = self.rng.normal(0.0, std, size=shape).astype(self.dtype)
        return Tensor(data, requires_grad=True)

    def full(self, shape, value: float) -> Tensor:
        return Tensor(np.full(shape, value, dtype=self.dtype), requires_grad=True)


def _embedding(init: _Init, vocab: int, config: ModelConfig) -> EmbeddingParams:
    word = init.normal((vocab, config.d), 0.1)
    if vocab > PAD_ID:
        word.data[PAD_ID] = 0.0
    return EmbeddingParams(word=word, position=init.normal((config.max_len, config.d), 0.1))


def _conv(init: _Init, config: ModelConfig) -> ConvLayerParams:
    d, r = config.d, config.kernel
    std = math.sqrt(4.0 * (1.0 - config.dropout) / (r * d))
    return ConvLayerParams(filter=init.normal((r * d, 2 * d), std), bias=init.full((2 * d,), 0.0))


def _attention(init: _Init, config: ModelConfig) -> AttentionParams:
    d = config.d
    std = 1.0 / math.sqrt(d)
    return AttentionParams(
        wq=init.normal((d, d), std),
        wk=init.normal((d, d), std),
        wv=init.normal((d, d), std),
        wo=init.normal((d, d), std),
        heads=config.heads,
    )


def _feed_forward(init: _Init, config: ModelConfig) -> FeedForwardParams:
    d, d_ff = config.d, config.d_ff
    return FeedForwardParams(
        w1=init.normal((d, d_ff), 1.0 / math.sqrt(d)),
        b1=init.full((d_ff,), 0.0),
        w2=init.normal((d_ff, d), 1.0 / math.sqrt(d_ff)),
        b2=init.full((d,), 0.0),
    )


def _layer_norm(init: _Init, config: ModelConfig) -> LayerNormParams:
    return LayerNormParams(
        gain=init.full((config.d,), 1.0), bias=init.full((config.d,), 0.0), eps=config.ln_eps
    )


def _gate(init: _Init, config: ModelConfig) -> GateParams:
    return GateParams(
        weight=init.normal((2 * config.d, 1), 1.0 / math.sqrt(2 * config.d)),
        bias=init.full((1,), 0.0),
    )


def init_params(config: ModelConfig, seed: int = 1) -> DPNParams:
    init = _Init(seed, config.dtype)
    gated = config.both_encoders

    enc_cnn = [_conv(init, config) for _ in range(config.cnn_enc_layers)] if config.enc_cnn else []
    enc_san = (
        [
            SANEncoderLayerParams(
                self_attn=_attention(init, config),
                ln_attn=_layer_norm(init, config),
                ffn=_feed_forward(init, config),
                ln_ffn=_layer_norm(init, config),
            )
            for _ in range(config.san_enc_layers)
        ]
        if config.enc_san
        else []
    )
    dec_cnn = (
        [
            CNNDecoderLayerParams(
                conv=_conv(init, config), gate=_gate(init, config) if gated else None
            )
            for _ in range(config.cnn_dec_layers)
        ]
        if config.dec_cnn
        else []
    )
    dec_san = (
        [
            SANDecoderLayerParams(
                self_attn=_attention(init, config),
                ln_self=_layer_norm(init, config),
                ln_ctx=_layer_norm(init, config),
                ffn=_feed_forward(init, config),
                ln_ffn=_layer_norm(init, config),
                gate=_gate(init, config) if gated else None,
            )
            for _ in range(config.san_dec_layers)
        ]
        if config.dec_san
        else []
    )
    output = OutputFusionParams(
        proj_w=init.normal((config.d, config.tgt_vocab_size), 1.0 / math.sqrt(config.d)),
        proj_b=init.full((config.tgt_vocab_size,), 0.0),
        gate=_gate(init, config) if config.both_decoders else None,
    )

    params = DPNParams(
        config=config,
        src_embed=_embedding(init, config.src_vocab_size, config),
        tgt_embed=_embedding(init, config.tgt_vocab_size, config),
        enc_cnn=enc_cnn,
        enc_san=enc_san,
        dec_cnn=dec_cnn,
        dec_san=dec_san,
        output=output,
    )
    for name, tensor in params.named_parameters():
        tensor.name = name
    return params
