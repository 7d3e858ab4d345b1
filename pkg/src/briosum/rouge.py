"""ROUGE-1 / ROUGE-2 / ROUGE-L and the scalar quality score for ranking.

All scores operate on token sequences (any hashable items). ROUGE-n uses
clipped n-gram counts: each reference n-gram is credited at most as many
times as it occurs in the reference. ROUGE-L uses the longest common
subsequence over the full sequences. F1 is the reported quantity and the
quality score is the arithmetic mean of the three F1 values.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RougeTriple:
    rouge1: RougeScore
    rouge2: RougeScore
    rougeL: RougeScore


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _score(overlap: int, cand_total: int, ref_total: int) -> RougeScore:
    if cand_total == 0 or ref_total == 0:
        return RougeScore(0.0, 0.0, 0.0)
    precision = overlap / cand_total
    recall = overlap / ref_total
    return RougeScore(precision, recall, _f1(precision, recall))


def _ngrams(tokens: Sequence[Hashable], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[Hashable], reference: Sequence[Hashable], n: int) -> RougeScore:
    """Clipped n-gram overlap between candidate and reference."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand_counts = _ngrams(candidate, n)
    ref_counts = _ngrams(reference, n)
    overlap = sum((cand_counts & ref_counts).values())
    return _score(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def _lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> RougeScore:
    """Longest-common-subsequence overlap over the full sequences."""
    lcs = _lcs_length(candidate, reference)
    return _score(lcs, len(candidate), len(reference))


def score_pair(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> RougeTriple:
    """The full ROUGE-1/2/L bundle for one candidate-reference pair."""
    return RougeTriple(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
    )


def quality_score(triple: RougeTriple) -> float:
    """Arithmetic mean of the ROUGE-1, ROUGE-2 and ROUGE-L F1 values."""
    return (triple.rouge1.f1 + triple.rouge2.f1 + triple.rougeL.f1) / 3.0
