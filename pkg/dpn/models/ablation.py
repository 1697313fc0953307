"""
The M1-M9 path grid and closed-form parameter counting.

Each ablation id enables a subset of (encoder CNN, encoder SAN, decoder CNN,
decoder SAN). M9 is the full double path network.
"""

from typing import Any, Dict, Mapping, Tuple, Union

from pydantic import ValidationError

from dpn.config.schema import ModelConfig
from dpn.errors import ConfigError

# id -> (enc_cnn, enc_san, dec_cnn, dec_san)
ABLATIONS: Dict[str, Tuple[bool, bool, bool, bool]] = {
    "M1": (True, False, True, False),
    "M2": (True, False, False, True),
    "M3": (True, False, True, True),
    "M4": (False, True, True, False),
    "M5": (False, True, False, True),
    "M6": (False, True, True, True),
    "M7": (True, True, True, False),
    "M8": (True, True, False, True),
    "M9": (True, True, True, True),
}


def build_ablation(ablation_id: str, base: Union[ModelConfig, Mapping[str, Any]]) -> ModelConfig:
    key = ablation_id.strip().upper()
    if key not in ABLATIONS:
        raise ConfigError(
            f"Unknown ablation id: {ablation_id}. Use one of {', '.join(ABLATIONS)}"
        )
    values = base.model_dump() if isinstance(base, ModelConfig) else dict(base)
    enc_cnn, enc_san, dec_cnn, dec_san = ABLATIONS[key]
    values.update(enc_cnn=enc_cnn, enc_san=enc_san, dec_cnn=dec_cnn, dec_san=dec_san)
    try:
        return ModelConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"ablation {key}: {e.errors()[0]['msg']}") from e


def _embedding(vocab: int, config: ModelConfig) -> int:
    return vocab * config.d + config.max_len * config.d


def _conv(config: ModelConfig) -> int:
    d = config.d
    return config.kernel * d * 2 * d + 2 * d


def _attention(config: ModelConfig) -> int:
    # q, k, v and output projections, no biases
    return 4 * config.d * config.d


def _feed_forward(config: ModelConfig) -> int:
    d, d_ff = config.d, config.d_ff
    return d * d_ff + d_ff + d_ff * d + d


def _layer_norm(config: ModelConfig) -> int:
    return 2 * config.d


def _gate(config: ModelConfig) -> int:
    return 2 * config.d + 1


def count_parameters(config: ModelConfig) -> int:
    """
    Number of scalar parameters.

    Source and target embeddings are separate tables (word + learned position),
    the vocabulary projection is not tied to any embedding, and disabled paths
    contribute nothing. A fusion gate exists in a decoder layer only when both
    encoder paths exist; the output gate only when both decoder paths exist.
    """
    total = _embedding(config.src_vocab_size, config) + _embedding(config.tgt_vocab_size, config)

    if config.enc_cnn:
        total += config.cnn_enc_layers * _conv(config)
    if config.enc_san:
        per_layer = _attention(config) + _feed_forward(config) + 2 * _layer_norm(config)
        total += config.san_enc_layers * per_layer

    gate = _gate(config) if config.both_encoders else 0
    if config.dec_cnn:
        total += config.cnn_dec_layers * (_conv(config) + gate)
    if config.dec_san:
        per_layer = _attention(config) + _feed_forward(config) + 3 * _layer_norm(config) + gate
        total += config.san_dec_layers * per_layer

    if config.both_decoders:
        total += _gate(config)
    total += config.d * config.tgt_vocab_size + config.tgt_vocab_size
    return total
