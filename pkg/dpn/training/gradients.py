import logging
from typing import Optional

from dpn.autodiff.gradcheck import GradCheckReport, grad_check
from dpn.config.presets import get_preset
from dpn.config.schema import ModelConfig
from dpn.data.batch import collate
from dpn.data.synthetic import gen_synthetic
from dpn.data.vocab import SPECIALS
from dpn.models.dpn import forward
from dpn.models.params import init_params
from dpn.training.loss import nll_loss

logger = logging.getLogger(__name__)


def verify_config() -> ModelConfig:
    return ModelConfig.model_validate(get_preset("verify")["model"])


def check_model_gradients(
    config: Optional[ModelConfig] = None,
    seed: int = 1,
    pairs: int = 3,
    max_entries: Optional[int] = None,
    tol: float = 1e-3,
    h: float = 1e-5,
    eps: float = 1e-6,
) -> GradCheckReport:
    """
    Finite-difference check of every parameter gradient of the full training loss.

    The batch is a seeded reverse task over the model's non-special ids with
    mixed lengths, so padding is exercised. `eps` is an absolute floor in the
    relative-error denominator that keeps round-off on near-zero gradients
    from counting as a mismatch; coordinates that pass only through it are
    counted in `GradCheckReport.floored_entries`.
    """
    config = config or verify_config()
    if config.dtype != "float64":
        logger.warning("Gradient check on a float32 model; expect errors far above tolerance")
    params = init_params(config, seed)
    symbols = min(config.src_vocab_size, config.tgt_vocab_size) - len(SPECIALS)
    longest = max(1, min(6, config.max_len - 2))
    batch = collate(gen_synthetic("reverse", pairs, symbols, (1, longest), seed))
    named = params.named_parameters()

    def loss_fn(*_):
        return nll_loss(forward(params, batch.src, batch.tgt_in, batch.src_mask), batch.tgt_out)

    return grad_check(
        loss_fn,
        [t for _, t in named],
        h=h,
        tol=tol,
        eps=eps,
        max_entries=max_entries,
        seed=seed,
        names=[name for name, _ in named],
    )
