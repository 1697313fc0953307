"""Single-reference, case-sensitive BLEU and ROUGE-1/2/L on pre-tokenized text."""

import math
from collections import Counter
from typing import List, Sequence, Tuple, Union

from dpn.errors import DataError

Text = Union[str, Sequence[str]]
ROUGE_VARIANTS = ("1", "2", "L")


def _tokens(text: Text) -> List[str]:
    return text.split() if isinstance(text, str) else list(text)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_pair(hypotheses: Sequence, references: Sequence):
    if not hypotheses:
        raise DataError("No hypotheses to score")
    if len(hypotheses) != len(references):
        raise DataError(
            f"{len(hypotheses)} hypotheses but {len(references)} references"
        )


def bleu_stats(hyp: Sequence[str], ref: Sequence[str], max_ngram: int = 4) -> Counter:
    stats: Counter = Counter()
    for n in range(1, max_ngram + 1):
        h = ngrams(hyp, n)
        stats["guess", n] += sum(h.values())
        stats["match", n] += sum((h & ngrams(ref, n)).values())
    stats["hyp_len"] += len(hyp)
    stats["ref_len"] += len(ref)
    return stats


def bleu(hypotheses: Sequence[Text], references: Sequence[Text], max_ngram: int = 4) -> float:
    """
    Corpus BLEU x 100: geometric mean of clipped n-gram precisions times the
    brevity penalty exp(1 - r/c) when the hypotheses are shorter than the
    references. Any zero precision gives 0.
    """
    _check_pair(hypotheses, references)
    stats: Counter = Counter()
    for hyp, ref in zip(hypotheses, references):
        stats += bleu_stats(_tokens(hyp), _tokens(ref), max_ngram)

    log_precision = 0.0
    for n in range(1, max_ngram + 1):
        guess, match = stats["guess", n], stats["match", n]
        if guess == 0 or match == 0:
            return 0.0
        log_precision += math.log(match / guess) / max_ngram

    hyp_len, ref_len = stats["hyp_len"], stats["ref_len"]
    log_brevity = 1.0 - ref_len / hyp_len if hyp_len < ref_len else 0.0
    return 100.0 * math.exp(log_precision + log_brevity)


def _f1(overlap: int, hyp_count: int, ref_count: int) -> float:
    if overlap == 0 or hyp_count == 0 or ref_count == 0:
        return 0.0
    precision, recall = overlap / hyp_count, overlap / ref_count
    return 2 * precision * recall / (precision + recall)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b):
            current.append(previous[j] + 1 if x == y else max(previous[j + 1], current[j]))
        previous = current
    return previous[-1]


def rouge_scores(hyp: Text, ref: Text, variant: str) -> Tuple[float, float, float]:
    """(precision, recall, F1) of one sentence pair."""
    h, r = _tokens(hyp), _tokens(ref)
    if variant == "L":
        overlap, hyp_count, ref_count = lcs_length(h, r), len(h), len(r)
    elif variant in ("1", "2"):
        n = int(variant)
        hg, rg = ngrams(h, n), ngrams(r, n)
        overlap, hyp_count, ref_count = sum((hg & rg).values()), sum(hg.values()), sum(rg.values())
    else:
        raise DataError(f"Unknown ROUGE variant: {variant}. Use one of {ROUGE_VARIANTS}")
    precision = overlap / hyp_count if hyp_count else 0.0
    recall = overlap / ref_count if ref_count else 0.0
    return precision, recall, _f1(overlap, hyp_count, ref_count)


def rouge(hypotheses: Sequence[Text], references: Sequence[Text], variant: str = "1") -> float:
    """Mean per-sentence ROUGE-N / ROUGE-L F1; an empty hypothesis contributes 0."""
    variant = variant.upper() if variant.lower() == "l" else variant
    _check_pair(hypotheses, references)
    return sum(rouge_scores(h, r, variant)[2] for h, r in zip(hypotheses, references)) / len(hypotheses)
