"""
Named run presets.

`iwslt` and `nist` mirror the two model settings of the double path network
(4 CNN / 2 SAN layers and 12 CNN / 6 SAN layers, both 256 wide); `gigaword`
reuses the small setting with summarization decoding. The `cnn-*` / `san-*`
presets are the same-size single-path comparison models. `verify` is the f64
configuration used for finite-difference checks.
"""

from typing import Any, Dict

from dpn.errors import ConfigError

# Dictionary sizes produced by 10K joint BPE types on IWSLT14 de-en.
IWSLT_SRC_VOCAB = 8848
IWSLT_TGT_VOCAB = 6632

_SMALL = {
    "d": 256,
    "d_ff": 1024,
    "heads": 4,
    "kernel": 3,
    "cnn_enc_layers": 4,
    "san_enc_layers": 2,
    "cnn_dec_layers": 4,
    "san_dec_layers": 2,
    "max_len": 256,
    "dropout": 0.1,
}

PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "tiny": {
        "model": {
            "d": 64,
            "d_ff": 256,
            "heads": 4,
            "kernel": 3,
            "cnn_enc_layers": 2,
            "san_enc_layers": 1,
            "cnn_dec_layers": 2,
            "san_dec_layers": 1,
            "max_len": 64,
            "dropout": 0.0,
        },
        "train": {"lr": 0.25, "momentum": 0.99, "max_tokens": 1200, "clip_norm": 0.1},
        "decode": {"beam": 5, "max_len": 48},
        "data": {"symbols": 20, "min_symbols": 1, "max_symbols": 20},
    },
    "verify": {
        "model": {
            "d": 8,
            "d_ff": 16,
            "heads": 2,
            "kernel": 3,
            "cnn_enc_layers": 2,
            "san_enc_layers": 1,
            "cnn_dec_layers": 2,
            "san_dec_layers": 1,
            "src_vocab_size": 11,
            "tgt_vocab_size": 11,
            "max_len": 8,
            "dropout": 0.0,
            "dtype": "float64",
        },
        "data": {"symbols": 6, "min_symbols": 1, "max_symbols": 7, "max_len": 8},
    },
    "iwslt": {
        "model": {**_SMALL, "src_vocab_size": IWSLT_SRC_VOCAB, "tgt_vocab_size": IWSLT_TGT_VOCAB},
        "train": {"lr": 0.25, "max_tokens": 4000},
        "decode": {"beam": 5, "max_len": 200},
    },
    "nist": {
        "model": {
            **_SMALL,
            "cnn_enc_layers": 12,
            "san_enc_layers": 6,
            "cnn_dec_layers": 12,
            "san_dec_layers": 6,
            "src_vocab_size": 37000,
            "tgt_vocab_size": 25000,
            "dropout": 0.2,
        },
        "train": {"lr": 0.5, "max_tokens": 4000},
        "decode": {"beam": 10, "max_len": 200},
    },
    "gigaword": {
        "model": {**_SMALL, "src_vocab_size": 30000, "tgt_vocab_size": 30000},
        "train": {"lr": 0.25, "max_tokens": 4000},
        "decode": {"beam": 5, "max_len": 60, "min_len": 14},
    },
    "cnn-deep": {
        "model": {
            **_SMALL,
            "cnn_enc_layers": 8,
            "cnn_dec_layers": 8,
            "san_enc_layers": 0,
            "san_dec_layers": 0,
            "enc_san": False,
            "dec_san": False,
            "src_vocab_size": IWSLT_SRC_VOCAB,
            "tgt_vocab_size": IWSLT_TGT_VOCAB,
        },
    },
    "cnn-wide": {
        "model": {
            **_SMALL,
            "d": 512,
            "san_enc_layers": 0,
            "san_dec_layers": 0,
            "enc_san": False,
            "dec_san": False,
            "src_vocab_size": IWSLT_SRC_VOCAB,
            "tgt_vocab_size": IWSLT_TGT_VOCAB,
        },
    },
    "san-wide": {
        "model": {
            **_SMALL,
            "d": 512,
            "d_ff": 2048,
            "cnn_enc_layers": 0,
            "cnn_dec_layers": 0,
            "enc_cnn": False,
            "dec_cnn": False,
            "src_vocab_size": IWSLT_SRC_VOCAB,
            "tgt_vocab_size": IWSLT_TGT_VOCAB,
        },
    },
    "san-deep": {
        "model": {
            **_SMALL,
            "san_enc_layers": 4,
            "san_dec_layers": 4,
            "cnn_enc_layers": 0,
            "cnn_dec_layers": 0,
            "enc_cnn": False,
            "dec_cnn": False,
            "src_vocab_size": IWSLT_SRC_VOCAB,
            "tgt_vocab_size": IWSLT_TGT_VOCAB,
        },
    },
}


def get_preset(name: str) -> Dict[str, Dict[str, Any]]:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset: {name}. Available: {', '.join(sorted(PRESETS))}")
    return {section: dict(values) for section, values in PRESETS[name].items()}
