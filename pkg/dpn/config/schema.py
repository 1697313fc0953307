from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ModelConfig(_Strict):
    d: int = Field(64, ge=1)
    d_ff: int = Field(256, ge=1)
    heads: int = Field(4, ge=1)
    kernel: int = Field(3, ge=1)

    cnn_enc_layers: int = Field(2, ge=0)
    san_enc_layers: int = Field(1, ge=0)
    cnn_dec_layers: int = Field(2, ge=0)
    san_dec_layers: int = Field(1, ge=0)

    src_vocab_size: int = Field(32, ge=1)
    tgt_vocab_size: int = Field(32, ge=1)
    max_len: int = Field(64, ge=1)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    ln_eps: float = Field(1e-5, gt=0.0)

    enc_cnn: bool = True
    enc_san: bool = True
    dec_cnn: bool = True
    dec_san: bool = True

    dtype: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _check_paths(self):
        if not (self.enc_cnn or self.enc_san):
            raise ValueError("at least one encoder path (enc_cnn, enc_san) must be enabled")
        if not (self.dec_cnn or self.dec_san):
            raise ValueError("at least one decoder path (dec_cnn, dec_san) must be enabled")
        if self.d % self.heads != 0:
            raise ValueError(f"heads={self.heads} must divide d={self.d}")
        if self.kernel % 2 == 0:
            raise ValueError(f"kernel={self.kernel} must be odd for same-padded encoder convolutions")
        if self.enc_cnn and self.enc_san and self.cnn_enc_layers != 2 * self.san_enc_layers:
            raise ValueError(
                f"encoder depth mismatch: cnn_enc_layers={self.cnn_enc_layers} must equal "
                f"2 x san_enc_layers={self.san_enc_layers}"
            )
        if self.dec_cnn and self.dec_san and self.cnn_dec_layers != 2 * self.san_dec_layers:
            raise ValueError(
                f"decoder depth mismatch: cnn_dec_layers={self.cnn_dec_layers} must equal "
                f"2 x san_dec_layers={self.san_dec_layers}"
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    @property
    def both_encoders(self) -> bool:
        return self.enc_cnn and self.enc_san

    @property
    def both_decoders(self) -> bool:
        return self.dec_cnn and self.dec_san

    def paths(self) -> Tuple[bool, bool, bool, bool]:
        return (self.enc_cnn, self.enc_san, self.dec_cnn, self.dec_san)


class TrainConfig(_Strict):
    lr: float = Field(0.25, gt=0.0)
    momentum: float = Field(0.99, ge=0.0, lt=1.0)
    lr_shrink: float = Field(10.0, gt=1.0)
    patience: int = Field(1, ge=1)
    min_lr: float = Field(1e-5, ge=0.0)
    clip_norm: float = Field(0.0, ge=0.0)

    max_tokens: int = Field(4000, ge=1)
    max_epochs: int = Field(50, ge=1)
    max_steps: int = Field(0, ge=0)
    valid_every: int = Field(0, ge=0)
    log_every: int = Field(10, ge=1)
    seed: int = 1


class DecodeConfig(_Strict):
    beam: int = Field(5, ge=1)
    max_len: int = Field(64, ge=1)
    min_len: int = Field(0, ge=0)
    alpha: float = Field(1.0, ge=0.0)

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.min_len >= self.max_len:
            raise ValueError(f"min_len={self.min_len} must be below max_len={self.max_len}")
        return self


class DataConfig(_Strict):
    task: Optional[Literal["copy", "reverse", "sort"]] = None
    train_src: Optional[str] = None
    train_tgt: Optional[str] = None
    valid_src: Optional[str] = None
    valid_tgt: Optional[str] = None
    mode: Literal["word", "char"] = "word"
    max_vocab: int = Field(10000, ge=5)
    max_len: int = Field(64, ge=1)

    n_train: int = Field(2000, ge=1)
    n_valid: int = Field(200, ge=1)
    symbols: int = Field(20, ge=2)
    min_symbols: int = Field(1, ge=1)
    max_symbols: int = Field(20, ge=1)

    @model_validator(mode="after")
    def _check_source(self):
        if self.task is None and not (self.train_src and self.train_tgt):
            raise ValueError("either data.task or data.train_src + data.train_tgt is required")
        if self.min_symbols > self.max_symbols:
            raise ValueError(
                f"min_symbols={self.min_symbols} exceeds max_symbols={self.max_symbols}"
            )
        return self


class RunConfig(_Strict):
    name: str = "run"
    preset: Optional[str] = None
    ablation: Optional[str] = None
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    decode: DecodeConfig = DecodeConfig()
    data: DataConfig = DataConfig(task="copy")

    @model_validator(mode="after")
    def _check_lengths(self):
        limit = self.model.max_len
        if self.data.task and self.data.max_symbols + 1 > limit:
            raise ValueError(
                f"data.max_symbols={self.data.max_symbols} needs model.max_len >= "
                f"{self.data.max_symbols + 1} (targets carry eos), got {limit}"
            )
        return self
