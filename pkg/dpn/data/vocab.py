import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from dpn.errors import CorpusError, VocabularyError

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
MODES = ("word", "char")


def tokenize(text: str, mode: str = "word") -> List[str]:
    if mode == "word":
        return text.split()
    if mode == "char":
        return list(text)
    raise VocabularyError(f"Unknown tokenization mode: {mode}. Use one of {MODES}")


def detokenize(tokens: Sequence[str], mode: str = "word") -> str:
    if mode == "word":
        return " ".join(tokens)
    if mode == "char":
        return "".join(tokens)
    raise VocabularyError(f"Unknown tokenization mode: {mode}. Use one of {MODES}")


class Vocabulary:
    """Token <-> id map with pad/bos/eos/unk fixed at ids 0-3."""

    def __init__(self, tokens: Iterable[str], mode: str = "word"):
        if mode not in MODES:
            raise VocabularyError(f"Unknown tokenization mode: {mode}. Use one of {MODES}")
        self.mode = mode
        self.itos: List[str] = list(SPECIALS)
        self.stoi: Dict[str, int] = {tok: i for i, tok in enumerate(SPECIALS)}
        for tok in tokens:
            if tok in self.stoi:
                raise VocabularyError(f"Duplicate vocabulary token: {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.mode == other.mode and self.itos == other.itos

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def bos_id(self) -> int:
        return BOS_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    def token_to_id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def id_to_token(self, index: int) -> str:
        if not 0 <= index < len(self.itos):
            raise VocabularyError(f"Token id {index} out of range [0, {len(self.itos)})")
        return self.itos[index]

    def encode(self, text: str) -> List[int]:
        return [self.token_to_id(tok) for tok in tokenize(text, self.mode)]

    def decode(self, ids: Iterable[int], strip_specials: bool = True) -> str:
        tokens = []
        for i in ids:
            i = int(i)
            if i == EOS_ID and strip_specials:
                break
            if strip_specials and i in (PAD_ID, BOS_ID):
                continue
            tokens.append(self.id_to_token(i))
        return detokenize(tokens, self.mode)

    def to_dict(self) -> Dict:
        return {"mode": self.mode, "tokens": self.itos[len(SPECIALS):]}

    @classmethod
    def from_dict(cls, data: Dict) -> "Vocabulary":
        try:
            return cls(data["tokens"], mode=data.get("mode", "word"))
        except (KeyError, TypeError) as e:
            raise VocabularyError(f"Malformed vocabulary record: {e}") from e

    def save(self, path: str):
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(lines: Iterable[str], mode: str = "word", max_size: int = 10000) -> Vocabulary:
    """
    Frequency-sorted vocabulary with ties broken lexicographically.

    `max_size` counts the four specials, so max_size=5 keeps only the most
    frequent token.
    """
    if max_size < len(SPECIALS):
        raise VocabularyError(f"max_size={max_size} cannot hold the {len(SPECIALS)} special tokens")
    counts: Counter = Counter()
    for line in lines:
        counts.update(tokenize(line, mode))
    for special in SPECIALS:
        counts.pop(special, None)
    if not counts:
        raise CorpusError("Cannot build a vocabulary from an empty corpus")

    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: max_size - len(SPECIALS)]]
    if len(kept) < len(ranked):
        logger.info(f"Vocabulary truncated to {max_size} entries ({len(ranked) - len(kept)} types map to unk)")
    return Vocabulary(kept, mode=mode)
