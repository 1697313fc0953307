"""
Beam search and greedy decoding over any next-token scorer.

A scorer exposes `start(src_ids)` returning an opaque state for one row,
`step(state, tokens)` returning ([rows, vocab] log-probabilities, state) for
the last token of every row, and `reorder(state, index)` selecting rows.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from dpn.autodiff.tensor import no_grad
from dpn.config.schema import DecodeConfig
from dpn.data.vocab import BOS_ID, EOS_ID, PAD_ID
from dpn.errors import ConfigError, LengthError
from dpn.models.dpn import encode
from dpn.models.incremental import decode_step, start_cache
from dpn.models.params import DPNParams

logger = logging.getLogger(__name__)


class Scorer(Protocol):
    def start(self, src_ids: Sequence[int]) -> Any: ...

    def step(self, state: Any, tokens: np.ndarray) -> Tuple[np.ndarray, Any]: ...

    def reorder(self, state: Any, index: np.ndarray) -> Any: ...


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: Tuple[int, ...]
    log_prob: float
    finished: bool
    finish_step: int

    def normalized(self, alpha: float) -> float:
        return self.log_prob / (max(len(self.tokens), 1) ** alpha)

    def output(self, eos_id: int = EOS_ID) -> List[int]:
        """Token ids without the trailing eos."""
        if self.finished and self.tokens and self.tokens[-1] == eos_id:
            return list(self.tokens[:-1])
        return list(self.tokens)


class DPNScorer:
    """Cached incremental scorer for a trained parameter set."""

    def __init__(self, params: DPNParams):
        self.params = params

    def start(self, src_ids: Sequence[int]):
        src = np.asarray([list(src_ids)], dtype=np.int64)
        if src.shape[1] == 0:
            raise LengthError("Cannot decode an empty source sentence")
        with no_grad():
            enc = encode(self.params, src)
        return enc, start_cache(self.params, 1)

    def step(self, state, tokens: np.ndarray):
        enc, cache = state
        log_probs, cache = decode_step(self.params, enc, tokens, cache)
        return log_probs, (enc, cache)

    def reorder(self, state, index: np.ndarray):
        enc, cache = state
        return enc.select(index), cache.reorder(index)


def _check_lengths(beam: int, max_len: int, min_len: int):
    if beam < 1:
        raise ConfigError(f"beam must be at least 1, got {beam}")
    if min_len >= max_len:
        raise ConfigError(f"min_len={min_len} must be below max_len={max_len}")


def _mask_scores(log_probs: np.ndarray, t: int, min_len: int, banned: Sequence[int], eos_id: int) -> np.ndarray:
    scores = np.array(log_probs, dtype=np.float64)
    scores[:, list(banned)] = -math.inf
    if t < min_len:
        scores[:, eos_id] = -math.inf
    return scores


def _can_stop(finished: List[BeamHypothesis], live: List[BeamHypothesis], alpha: float, max_len: int) -> bool:
    """True once no live row can still outscore the best finished hypothesis."""
    if not finished:
        return False
    best = max(h.normalized(alpha) for h in finished)
    # lp / max_len^alpha bounds every extension of a live row
    ceiling = max(h.log_prob / (max_len**alpha) for h in live)
    return best >= ceiling


def _search_width(
    scorer: Scorer,
    src_ids: Sequence[int],
    beam: int,
    max_len: int,
    min_len: int,
    alpha: float,
    bos_id: int,
    eos_id: int,
    banned: Sequence[int],
) -> List[BeamHypothesis]:
    """Final candidates of one pruned search holding `beam` live rows."""
    state = scorer.start(src_ids)
    live: List[BeamHypothesis] = [BeamHypothesis((), 0.0, False, -1)]
    finished: List[BeamHypothesis] = []

    for t in range(max_len):
        last = np.array([h.tokens[-1] if h.tokens else bos_id for h in live], dtype=np.int64)
        log_probs, state = scorer.step(state, last)
        scores = _mask_scores(log_probs, t, min_len, banned, eos_id)
        totals = np.array([h.log_prob for h in live])[:, None] + scores

        rows, tokens = np.meshgrid(np.arange(totals.shape[0]), np.arange(totals.shape[1]), indexing="ij")
        flat = totals.reshape(-1)
        order = np.lexsort((tokens.reshape(-1), rows.reshape(-1), -flat))

        next_live: List[BeamHypothesis] = []
        parents: List[int] = []
        for rank, k in enumerate(order):
            total = float(flat[k])
            if total == -math.inf or len(next_live) == beam:
                break
            row, token = int(rows.flat[k]), int(tokens.flat[k])
            hyp = BeamHypothesis(live[row].tokens + (token,), total, token == eos_id, t)
            if not hyp.finished:
                next_live.append(hyp)
                parents.append(row)
            elif rank < beam:
                finished.append(hyp)

        live = next_live
        if not live:
            return finished
        if _can_stop(finished, live, alpha, max_len):
            return finished
        state = scorer.reorder(state, np.asarray(parents, dtype=np.int64))

    return finished + live


def beam_search(
    scorer: Scorer,
    src_ids: Sequence[int],
    beam: int = 5,
    max_len: int = 64,
    min_len: int = 0,
    alpha: float = 1.0,
    bos_id: int = BOS_ID,
    eos_id: int = EOS_ID,
    banned: Sequence[int] = (PAD_ID, BOS_ID),
) -> BeamHypothesis:
    """
    Best hypothesis for one source sentence.

    Every step expands each live row over the vocabulary and walks the
    candidates best-first (ties: lower row, then lower token id). An eos
    candidate retires as finished when it ranks among the step's top `beam`
    candidates; other candidates fill the live rows until `beam` are held.
    Search ends when no live row can beat the best finished hypothesis, no
    row is live, or `max_len` tokens were generated. Eos is unavailable
    until `min_len` tokens exist. Rows still live at `max_len` compete
    unfinished.

    The pruned search runs at every width from 1 to `beam` and the winner is
    taken over all of their candidates, so widening the beam never lowers
    the returned score. The winner maximizes log-prob / length^alpha, ties
    going to the earlier finish and then the smaller id sequence.
    """
    _check_lengths(beam, max_len, min_len)
    candidates: List[BeamHypothesis] = []
    for width in range(1, beam + 1):
        candidates += _search_width(scorer, src_ids, width, max_len, min_len, alpha, bos_id, eos_id, banned)
    if not candidates:
        raise LengthError("Beam search produced no hypothesis (every token was banned)")
    return min(candidates, key=lambda h: (-h.normalized(alpha), h.finish_step, h.tokens))


def greedy_decode(
    scorer: Scorer,
    src_ids: Sequence[int],
    max_len: int = 64,
    min_len: int = 0,
    bos_id: int = BOS_ID,
    eos_id: int = EOS_ID,
    banned: Sequence[int] = (PAD_ID, BOS_ID),
) -> BeamHypothesis:
    """Argmax token per step until eos or `max_len` tokens."""
    _check_lengths(1, max_len, min_len)
    state = scorer.start(src_ids)
    tokens: List[int] = []
    total = 0.0
    last = bos_id
    for t in range(max_len):
        log_probs, state = scorer.step(state, np.array([last], dtype=np.int64))
        scores = _mask_scores(log_probs, t, min_len, banned, eos_id)[0]
        last = int(np.argmax(scores))
        total += float(scores[last])
        tokens.append(last)
        if last == eos_id:
            return BeamHypothesis(tuple(tokens), total, True, t)
    return BeamHypothesis(tuple(tokens), total, False, max_len - 1)


def decode_sentences(
    params: DPNParams,
    sources: Sequence[Sequence[int]],
    config: DecodeConfig,
    greedy: bool = False,
) -> List[Optional[BeamHypothesis]]:
    """
    Decode each source independently; empty sources yield None. Sources
    longer than the model's position table are truncated to fit it.
    """
    scorer = DPNScorer(params)
    limit = params.config.max_len
    max_len = min(config.max_len, limit)
    results: List[Optional[BeamHypothesis]] = []
    for i, src in enumerate(sources):
        if not src:
            results.append(None)
            continue
        if len(src) > limit:
            logger.warning(f"Source {i + 1} has {len(src)} tokens; truncating to max_len={limit}")
            src = list(src)[:limit]
        if greedy:
            hyp = greedy_decode(scorer, src, max_len=max_len, min_len=config.min_len)
        else:
            hyp = beam_search(scorer, src, config.beam, max_len, config.min_len, config.alpha)
        results.append(hyp)
        if (i + 1) % 100 == 0:
            logger.info(f"Decoded {i + 1}/{len(sources)} sentences")
    return results
