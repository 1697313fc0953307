import logging
from dataclasses import dataclass
from typing import List

from dpn.config.schema import RunConfig
from dpn.data.corpus import SentencePair, load_parallel, read_lines
from dpn.data.synthetic import gen_synthetic, symbol_vocab
from dpn.data.vocab import Vocabulary, build_vocab

logger = logging.getLogger(__name__)


@dataclass
class Corpus:
    train: List[SentencePair]
    valid: List[SentencePair]
    vocab_src: Vocabulary
    vocab_tgt: Vocabulary


def prepare_corpus(config: RunConfig) -> Corpus:
    """
    Build the training/validation pairs and vocabularies a run config names,
    and size the model's embedding tables to the vocabularies.
    """
    data = config.data
    if data.task:
        vocab = symbol_vocab(data.symbols)
        lengths = (data.min_symbols, data.max_symbols)
        seed = config.train.seed
        train = gen_synthetic(data.task, data.n_train, data.symbols, lengths, seed)
        valid = gen_synthetic(data.task, data.n_valid, data.symbols, lengths, seed + 1)
        corpus = Corpus(train, valid, vocab, vocab)
    else:
        max_len = min(data.max_len, config.model.max_len)
        vocab_src = build_vocab(read_lines(data.train_src), data.mode, data.max_vocab)
        vocab_tgt = build_vocab(read_lines(data.train_tgt), data.mode, data.max_vocab)
        train, _ = load_parallel(data.train_src, data.train_tgt, vocab_src, vocab_tgt, max_len)
        valid: List[SentencePair] = []
        if data.valid_src and data.valid_tgt:
            valid, _ = load_parallel(data.valid_src, data.valid_tgt, vocab_src, vocab_tgt, max_len)
        corpus = Corpus(train, valid, vocab_src, vocab_tgt)

    config.model.src_vocab_size = len(corpus.vocab_src)
    config.model.tgt_vocab_size = len(corpus.vocab_tgt)
    logger.info(
        f"Corpus ready: {len(corpus.train)} train / {len(corpus.valid)} valid pairs, "
        f"vocab {len(corpus.vocab_src)} -> {len(corpus.vocab_tgt)}"
    )
    return corpus
