"""Seeded copy / reverse / sort sequence tasks."""

from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from dpn.data.corpus import SentencePair
from dpn.data.vocab import SPECIALS, Vocabulary
from dpn.errors import ConfigError

TASKS: Dict[str, Callable[[Sequence[int]], List[int]]] = {
    "copy": lambda seq: list(seq),
    "reverse": lambda seq: list(reversed(seq)),
    "sort": lambda seq: sorted(seq),
}


def symbol_vocab(k: int) -> Vocabulary:
    """Vocabulary of k symbols named s0..s{k-1}, in order."""
    return Vocabulary([f"s{i}" for i in range(k)], mode="word")


def gen_synthetic(
    task: str,
    n_pairs: int,
    vocab_k: int,
    len_range: Tuple[int, int],
    seed: int,
) -> List[SentencePair]:
    """
    Pairs whose source is uniform over ids of `symbol_vocab(vocab_k)` and
    whose target is the task applied to that source.
    """
    if task not in TASKS:
        raise ConfigError(f"Unknown synthetic task: {task}. Use one of {', '.join(TASKS)}")
    if vocab_k < 2:
        raise ConfigError(f"Synthetic tasks need at least 2 symbols, got {vocab_k}")
    low, high = len_range
    if not 1 <= low <= high:
        raise ConfigError(f"Invalid length range {len_range}")

    rng = np.random.default_rng(seed)
    first = len(SPECIALS)
    fn = TASKS[task]
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(low, high + 1))
        src = [int(t) for t in rng.integers(first, first + vocab_k, size=length)]
        pairs.append(SentencePair(tuple(src), tuple(fn(src))))
    return pairs
