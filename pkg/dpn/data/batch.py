from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dpn.data.corpus import SentencePair
from dpn.data.vocab import BOS_ID, EOS_ID, PAD_ID
from dpn.errors import EmptyBatchError


@dataclass
class Batch:
    """
    Padded id matrices for teacher forcing.

    tgt_in is bos + y and tgt_out is y + eos, so position t of tgt_in predicts
    position t of tgt_out. Positions at or beyond a row's length hold pad.
    """

    src: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    src_lengths: np.ndarray
    tgt_lengths: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def src_mask(self) -> np.ndarray:
        return self.src != PAD_ID

    @property
    def tgt_mask(self) -> np.ndarray:
        return self.tgt_out != PAD_ID

    @property
    def num_tokens(self) -> int:
        return int(self.src_lengths.sum() + self.tgt_lengths.sum())

    @property
    def padded_tokens(self) -> int:
        return int(self.src.size + self.tgt_out.size)


def collate(pairs: Sequence[SentencePair]) -> Batch:
    if not pairs:
        raise EmptyBatchError("Cannot collate an empty list of sentence pairs")
    batch = len(pairs)
    src_len = np.array([p.src_len for p in pairs], dtype=np.int64)
    tgt_len = np.array([p.tgt_len for p in pairs], dtype=np.int64)
    src = np.full((batch, max(1, int(src_len.max()))), PAD_ID, dtype=np.int64)
    tgt_in = np.full((batch, int(tgt_len.max())), PAD_ID, dtype=np.int64)
    tgt_out = np.full_like(tgt_in, PAD_ID)
    for i, pair in enumerate(pairs):
        src[i, : pair.src_len] = pair.src
        y = list(pair.tgt)
        tgt_in[i, : len(y) + 1] = [BOS_ID] + y
        tgt_out[i, : len(y) + 1] = y + [EOS_ID]
    return Batch(src=src, tgt_in=tgt_in, tgt_out=tgt_out, src_lengths=src_len, tgt_lengths=tgt_len)
