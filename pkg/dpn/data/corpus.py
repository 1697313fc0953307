import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

from dpn.data.vocab import Vocabulary
from dpn.errors import CorpusError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SentencePair:
    """Token ids of one source/target pair. Neither side carries bos or eos."""

    src: Tuple[int, ...]
    tgt: Tuple[int, ...]

    @property
    def src_len(self) -> int:
        return len(self.src)

    @property
    def tgt_len(self) -> int:
        # +1 for the eos every framed target carries
        return len(self.tgt) + 1


def read_lines(path: str) -> List[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CorpusError(f"Could not read corpus file {path}: {e}") from e


def load_parallel(
    src_path: str,
    tgt_path: str,
    vocab_src: Vocabulary,
    vocab_tgt: Vocabulary,
    max_len: int,
) -> Tuple[List[SentencePair], int]:
    """
    Load line-aligned source/target files.

    Returns the pairs and the number dropped because the source or the
    eos-terminated target exceeds `max_len` (or either side is empty).
    """
    src_lines = read_lines(src_path)
    tgt_lines = read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(
            f"Line count mismatch: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)} (first unmatched line: "
            f"{min(len(src_lines), len(tgt_lines)) + 1})"
        )

    pairs: List[SentencePair] = []
    dropped = 0
    for src_line, tgt_line in zip(src_lines, tgt_lines):
        pair = SentencePair(tuple(vocab_src.encode(src_line)), tuple(vocab_tgt.encode(tgt_line)))
        if pair.src_len == 0 or pair.src_len > max_len or pair.tgt_len > max_len:
            dropped += 1
            continue
        pairs.append(pair)

    if dropped:
        logger.warning(f"Dropped {dropped} of {len(src_lines)} pairs from {src_path} (empty or longer than {max_len})")
    logger.info(f"Loaded {len(pairs)} pairs from {src_path} / {tgt_path}")
    return pairs, dropped
