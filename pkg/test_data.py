import numpy as np
import pytest

from dpn.data.batch import collate
from dpn.config.schema import DataConfig, ModelConfig, RunConfig
from dpn.data.corpus import SentencePair, load_parallel
from dpn.data.dataset import prepare_corpus
from dpn.data.synthetic import gen_synthetic, symbol_vocab
from dpn.data.vocab import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocabulary, build_vocab
from dpn.errors import ConfigError, CorpusError, EmptyBatchError, VocabularyError


def test_vocabulary_orders_by_frequency_then_token():
    vocab = build_vocab(["b a c b", "c b d", "a"], max_size=100)
    assert vocab.itos[:4] == ["<pad>", "<s>", "</s>", "<unk>"]
    # b:3, then a:2 and c:2 tie lexicographically, then d:1
    assert vocab.itos[4:] == ["b", "a", "c", "d"]


def test_vocabulary_truncation_counts_specials():
    vocab = build_vocab(["x x y z"], max_size=5)
    assert len(vocab) == 5
    assert vocab.encode("x y z") == [4, UNK_ID, UNK_ID]
    with pytest.raises(VocabularyError):
        build_vocab(["x"], max_size=3)


def test_empty_corpus_cannot_build_a_vocabulary():
    with pytest.raises(CorpusError):
        build_vocab(["", "   "])


def test_vocabulary_round_trip(tmp_path):
    vocab = build_vocab(["hallo welt", "welt"], mode="word")
    path = tmp_path / "vocab.json"
    vocab.save(str(path))
    assert Vocabulary.load(str(path)) == vocab
    with pytest.raises(VocabularyError):
        Vocabulary(["a", "a"])


def test_decode_stops_at_eos_and_skips_framing():
    vocab = Vocabulary(["a", "b"])
    assert vocab.decode([BOS_ID, 4, 5, EOS_ID, 4]) == "a b"
    assert vocab.decode([4, PAD_ID, 5]) == "a b"
    assert vocab.decode([4, EOS_ID], strip_specials=False) == "a </s>"
    with pytest.raises(VocabularyError):
        vocab.id_to_token(6)


def test_char_mode_tokenizes_characters():
    vocab = build_vocab(["abba"], mode="char")
    assert vocab.itos[4:] == ["a", "b"]
    assert vocab.decode(vocab.encode("ab")) == "ab"


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def test_load_parallel_maps_unknown_tokens_and_drops_long_pairs(tmp_path):
    src = write_lines(tmp_path / "train.de", ["a b", "a b c d e f"])
    tgt = write_lines(tmp_path / "train.en", ["x q", "x"])
    vocab_src = Vocabulary(["a", "b"])
    vocab_tgt = Vocabulary(["x"])
    pairs, dropped = load_parallel(src, tgt, vocab_src, vocab_tgt, max_len=4)
    assert dropped == 1
    assert pairs == [SentencePair((4, 5), (4, UNK_ID))]


def test_target_length_limit_counts_eos(tmp_path):
    src = write_lines(tmp_path / "s", ["a"])
    tgt = write_lines(tmp_path / "t", ["x x x"])
    vocab = Vocabulary(["a", "x"])
    assert load_parallel(src, tgt, vocab, vocab, max_len=4)[0]
    assert load_parallel(src, tgt, vocab, vocab, max_len=3)[1] == 1


def test_load_parallel_rejects_mismatched_files(tmp_path):
    src = write_lines(tmp_path / "s", ["a", "b"])
    tgt = write_lines(tmp_path / "t", ["x"])
    vocab = Vocabulary(["a", "b", "x"])
    with pytest.raises(CorpusError, match="mismatch"):
        load_parallel(src, tgt, vocab, vocab, max_len=10)
    with pytest.raises(CorpusError):
        load_parallel(str(tmp_path / "missing"), tgt, vocab, vocab, max_len=10)


@pytest.mark.parametrize("task", ["copy", "reverse", "sort"])
def test_synthetic_targets_follow_the_task(task):
    pairs = gen_synthetic(task, 50, 6, (1, 9), seed=4)
    vocab = symbol_vocab(6)
    assert len(vocab) == 10
    for pair in pairs:
        assert 1 <= pair.src_len <= 9
        assert all(4 <= t < 10 for t in pair.src)
        expected = {"copy": list(pair.src), "reverse": list(pair.src)[::-1], "sort": sorted(pair.src)}[task]
        assert list(pair.tgt) == expected


def test_synthetic_generation_is_seeded():
    assert gen_synthetic("copy", 20, 5, (2, 6), seed=1) == gen_synthetic("copy", 20, 5, (2, 6), seed=1)
    assert gen_synthetic("copy", 20, 5, (2, 6), seed=1) != gen_synthetic("copy", 20, 5, (2, 6), seed=2)


def test_synthetic_arguments_are_validated():
    with pytest.raises(ConfigError):
        gen_synthetic("shuffle", 1, 5, (1, 2), seed=0)
    with pytest.raises(ConfigError):
        gen_synthetic("copy", 1, 1, (1, 2), seed=0)
    with pytest.raises(ConfigError):
        gen_synthetic("copy", 1, 5, (3, 2), seed=0)


def test_collate_frames_targets_with_bos_and_eos():
    batch = collate([SentencePair((4, 5, 6), (7, 8)), SentencePair((9,), (10,))])
    np.testing.assert_array_equal(batch.src, [[4, 5, 6], [9, 0, 0]])
    np.testing.assert_array_equal(batch.tgt_in, [[BOS_ID, 7, 8], [BOS_ID, 10, 0]])
    np.testing.assert_array_equal(batch.tgt_out, [[7, 8, EOS_ID], [10, EOS_ID, 0]])
    assert batch.num_tokens == 4 + 5
    assert batch.padded_tokens == 6 + 6
    assert batch.tgt_mask.sum() == 5


def test_collate_rejects_empty_input():
    with pytest.raises(EmptyBatchError):
        collate([])


def test_file_corpus_respects_the_model_position_table(tmp_path):
    (tmp_path / "src.txt").write_text("a b\na b c d e f\nc\n")
    (tmp_path / "tgt.txt").write_text("x\ny\nx y z w v\n")
    config = RunConfig(
        model=ModelConfig(max_len=4),
        data=DataConfig(train_src=str(tmp_path / "src.txt"), train_tgt=str(tmp_path / "tgt.txt"), max_len=64),
    )
    corpus = prepare_corpus(config)
    assert len(corpus.train) == 1
    assert all(p.src_len <= 4 and p.tgt_len <= 4 for p in corpus.train)
