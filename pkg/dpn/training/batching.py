import logging
from typing import List, Sequence

import numpy as np

from dpn.data.corpus import SentencePair

logger = logging.getLogger(__name__)


def padded_cost(pairs: Sequence[SentencePair]) -> int:
    """Source plus target positions of the padded batch holding `pairs`."""
    if not pairs:
        return 0
    return len(pairs) * (max(p.src_len for p in pairs) + max(p.tgt_len for p in pairs))


def make_batches(
    pairs: Sequence[SentencePair], max_tokens: int, seed: int = 0
) -> List[List[int]]:
    """
    Group pair indices into length-sorted batches.

    Pairs are sorted by (source length, target length) with a seeded random
    tie-break, then cut greedily so every batch's padded source+target count
    stays within `max_tokens`. A pair that alone exceeds the limit becomes a
    batch of its own.
    """
    if not pairs:
        return []
    rng = np.random.default_rng(seed)
    tie = rng.permutation(len(pairs))
    src_len = np.array([p.src_len for p in pairs])
    tgt_len = np.array([p.tgt_len for p in pairs])
    order = np.lexsort((tie, tgt_len, src_len))

    batches: List[List[int]] = []
    current: List[int] = []
    max_src = max_tgt = 0
    for idx in order.tolist():
        s, t = int(src_len[idx]), int(tgt_len[idx])
        if s + t > max_tokens:
            logger.warning(
                f"Sentence pair {idx} has {s + t} tokens, over max_tokens={max_tokens}; batching it alone"
            )
            if current:
                batches.append(current)
                current, max_src, max_tgt = [], 0, 0
            batches.append([idx])
            continue
        new_src, new_tgt = max(max_src, s), max(max_tgt, t)
        if current and (len(current) + 1) * (new_src + new_tgt) > max_tokens:
            batches.append(current)
            current, new_src, new_tgt = [], s, t
        current.append(idx)
        max_src, max_tgt = new_src, new_tgt
    if current:
        batches.append(current)
    return batches


def random_batches(pairs: Sequence[SentencePair], max_tokens: int, seed: int = 0) -> List[List[int]]:
    """Same packing rule over a random order; the unsorted baseline for padding comparisons."""
    order = np.random.default_rng(seed).permutation(len(pairs)).tolist()
    batches: List[List[int]] = []
    current: List[int] = []
    for idx in order:
        if current and padded_cost([pairs[i] for i in current + [idx]]) > max_tokens:
            batches.append(current)
            current = []
        current.append(idx)
    if current:
        batches.append(current)
    return batches
