import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from dpn.autodiff.tensor import backward, no_grad, reset_tape
from dpn.config.schema import RunConfig
from dpn.data.batch import Batch, collate
from dpn.data.corpus import SentencePair
from dpn.data.vocab import Vocabulary
from dpn.errors import CheckpointError, CorpusError, DivergenceError
from dpn.models.dpn import forward
from dpn.models.params import DPNParams, init_params
from dpn.storage.checkpoint import Checkpoint, CheckpointStore
from dpn.storage.run_dir import JsonlLog
from dpn.training.batching import make_batches
from dpn.training.loss import nll_loss, token_accuracy
from dpn.training.optimizer import OptimizerState, clip_gradients, lr_schedule, nag_step

logger = logging.getLogger(__name__)


@dataclass
class TrainState:
    params: DPNParams
    optimizer: OptimizerState
    seed: int = 1
    epoch: int = 0
    step: int = 0
    batch_index: int = 0
    best_valid: float = math.inf
    finished: bool = False
    records: List[Dict[str, Any]] = field(default_factory=list)

    def losses(self) -> List[float]:
        return [r["loss"] for r in self.records if r["event"] == "train"]


def new_train_state(config: RunConfig) -> TrainState:
    train = config.train
    optimizer = OptimizerState(
        learning_rate=train.lr,
        momentum=train.momentum,
        shrink=train.lr_shrink,
        patience=train.patience,
    )
    return TrainState(params=init_params(config.model, train.seed), optimizer=optimizer, seed=train.seed)


def epoch_batches(pairs: Sequence[SentencePair], max_tokens: int, seed: int, epoch: int) -> List[List[int]]:
    """Length-bucketed batches for one epoch, visited in an order fixed by (seed, epoch)."""
    batches = make_batches(pairs, max_tokens, seed=seed)
    rng = np.random.default_rng([seed, epoch])
    return [batches[i] for i in rng.permutation(len(batches))]


def train_step(state: TrainState, batch: Batch, clip_norm: float = 0.0) -> Tuple[float, float]:
    rng = np.random.default_rng([state.seed, 1, state.step])
    reset_tape()
    log_probs = forward(state.params, batch.src, batch.tgt_in, batch.src_mask, training=True, rng=rng)
    loss = nll_loss(log_probs, batch.tgt_out)
    value = loss.item()
    if not math.isfinite(value):
        reset_tape()
        raise DivergenceError(f"Training loss became {value} at step {state.step} (lr={state.optimizer.learning_rate})")
    backward(loss)
    named = state.params.named_parameters()
    if clip_norm > 0:
        clip_gradients(named, clip_norm)
    nag_step(state.optimizer, named)
    state.params.zero_grad()
    state.step += 1
    return value, token_accuracy(log_probs, batch.tgt_out)


def evaluate_loss(params: DPNParams, pairs: Sequence[SentencePair], max_tokens: int) -> Tuple[float, float]:
    """Token-weighted loss and next-token accuracy over `pairs`, dropout off."""
    total_loss = total_correct = 0.0
    total_tokens = 0
    with no_grad():
        for indices in make_batches(pairs, max_tokens, seed=0):
            batch = collate([pairs[i] for i in indices])
            log_probs = forward(params, batch.src, batch.tgt_in, batch.src_mask)
            tokens = int(batch.tgt_mask.sum())
            total_loss += nll_loss(log_probs, batch.tgt_out).item() * tokens
            total_correct += token_accuracy(log_probs, batch.tgt_out) * tokens
            total_tokens += tokens
    if total_tokens == 0:
        return math.nan, math.nan
    return total_loss / total_tokens, total_correct / total_tokens


def build_checkpoint(
    state: TrainState,
    config: RunConfig,
    vocab_src: Optional[Vocabulary] = None,
    vocab_tgt: Optional[Vocabulary] = None,
) -> Checkpoint:
    header = {
        "run": config.model_dump(mode="json"),
        "dtype": config.model.dtype,
        "vocab_src": vocab_src.to_dict() if vocab_src else None,
        "vocab_tgt": vocab_tgt.to_dict() if vocab_tgt else None,
        "train": {
            "seed": state.seed,
            "epoch": state.epoch,
            "step": state.step,
            "batch_index": state.batch_index,
            "best_valid": None if math.isinf(state.best_valid) else state.best_valid,
            "finished": state.finished,
            "optimizer": {
                k: (None if isinstance(v, float) and math.isinf(v) else v)
                for k, v in state.optimizer.scalars().items()
            },
        },
    }
    arrays = state.params.state_dict()
    for name, velocity in state.optimizer.velocity.items():
        arrays[f"optim.velocity.{name}"] = velocity.copy()
    return Checkpoint(header=header, arrays=arrays)


def _inf(value) -> float:
    return math.inf if value is None else float(value)


def restore(checkpoint: Checkpoint) -> Tuple[TrainState, RunConfig, Optional[Vocabulary], Optional[Vocabulary]]:
    header = checkpoint.header
    try:
        config = RunConfig.model_validate(header["run"])
        meta = header["train"]
        scalars = meta["optimizer"]
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"Checkpoint header is missing or has invalid run metadata: {e}") from e

    params = init_params(config.model, meta["seed"])
    params.load_state_dict(checkpoint.params())
    optimizer = OptimizerState(
        learning_rate=scalars["learning_rate"],
        momentum=scalars["momentum"],
        shrink=scalars["shrink"],
        patience=scalars["patience"],
        velocity=checkpoint.velocities(),
        best_valid=_inf(scalars["best_valid"]),
        stalls=scalars["stalls"],
    )
    state = TrainState(
        params=params,
        optimizer=optimizer,
        seed=meta["seed"],
        epoch=meta["epoch"],
        step=meta["step"],
        batch_index=meta["batch_index"],
        best_valid=_inf(meta["best_valid"]),
        finished=meta.get("finished", False),
    )
    vocab_src = Vocabulary.from_dict(header["vocab_src"]) if header.get("vocab_src") else None
    vocab_tgt = Vocabulary.from_dict(header["vocab_tgt"]) if header.get("vocab_tgt") else None
    return state, config, vocab_src, vocab_tgt


def load_model(checkpoint: Checkpoint) -> Tuple[DPNParams, RunConfig, Optional[Vocabulary], Optional[Vocabulary]]:
    state, config, vocab_src, vocab_tgt = restore(checkpoint)
    return state.params, config, vocab_src, vocab_tgt


def train_loop(
    config: RunConfig,
    train_pairs: Sequence[SentencePair],
    valid_pairs: Sequence[SentencePair] = (),
    state: Optional[TrainState] = None,
    store: Optional[CheckpointStore] = None,
    log: Optional[JsonlLog] = None,
    vocab_src: Optional[Vocabulary] = None,
    vocab_tgt: Optional[Vocabulary] = None,
) -> TrainState:
    """
    Run NAG training until max_epochs, max_steps, or the learning rate drops below min_lr.

    Validation runs every `valid_every` steps, or at each epoch end when that is 0;
    it drives the lr schedule and the best checkpoint. `last.ckpt` is written at
    every validation and when training stops. A non-finite loss raises
    DivergenceError without touching existing checkpoints.
    """
    train = config.train
    state = state or new_train_state(config)
    log = log or JsonlLog(None)
    if not train_pairs:
        raise CorpusError("train_loop needs at least one training pair")

    def checkpoint(best: bool = False):
        if store is not None:
            store.save(build_checkpoint(state, config, vocab_src, vocab_tgt), best=best)

    def validate() -> bool:
        if not valid_pairs:
            return False
        loss, acc = evaluate_loss(state.params, valid_pairs, train.max_tokens)
        improved = loss < state.best_valid
        if improved:
            state.best_valid = loss
        lr_schedule(state.optimizer, loss)
        record = {
            "event": "valid",
            "step": state.step,
            "epoch": state.epoch,
            "loss": loss,
            "accuracy": acc,
            "lr": state.optimizer.learning_rate,
            "wall_time": time.time(),
        }
        state.records.append(record)
        log.write(record)
        logger.info(f"valid step={state.step} loss={loss:.4f} acc={acc:.4f} lr={state.optimizer.learning_rate:g}")
        checkpoint(best=improved)
        return state.optimizer.learning_rate < train.min_lr

    def out_of_steps() -> bool:
        return bool(train.max_steps) and state.step >= train.max_steps

    stop = state.finished or out_of_steps()
    tokens_seen, started = 0, time.perf_counter()
    while not stop and state.epoch < train.max_epochs:
        batches = epoch_batches(train_pairs, train.max_tokens, state.seed, state.epoch)
        while state.batch_index < len(batches):
            batch = collate([train_pairs[i] for i in batches[state.batch_index]])
            loss, acc = train_step(state, batch, train.clip_norm)
            state.batch_index += 1
            tokens_seen += batch.num_tokens
            record = {
                "event": "train",
                "step": state.step,
                "epoch": state.epoch,
                "loss": loss,
                "accuracy": acc,
                "lr": state.optimizer.learning_rate,
                "tokens_per_sec": tokens_seen / max(time.perf_counter() - started, 1e-9),
                "wall_time": time.time(),
            }
            state.records.append(record)
            log.write(record)
            if state.step % train.log_every == 0:
                logger.info(f"epoch={state.epoch} step={state.step} loss={loss:.4f} acc={acc:.4f}")
            if train.valid_every and state.step % train.valid_every == 0 and validate():
                stop = True
            if stop or out_of_steps():
                stop = True
                break
        if state.batch_index >= len(batches):
            state.epoch += 1
            state.batch_index = 0
            if not train.valid_every and validate():
                stop = True

    if state.epoch >= train.max_epochs or state.optimizer.learning_rate < train.min_lr:
        state.finished = True
    checkpoint()
    logger.info(f"Training stopped at epoch={state.epoch} step={state.step} lr={state.optimizer.learning_rate:g}")
    return state

