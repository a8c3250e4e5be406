"""Corpus-level BLEU over pre-tokenized segments.

The score is the geometric mean of clipped modified n-gram precisions for
orders 1..max_order, times the brevity penalty
``exp(min(0, 1 - ref_len / hyp_len))``, scaled to [0, 100]. Counts are summed
over all segments before precisions are taken (corpus aggregation), and a
single reference per segment is assumed.

Tokens are whatever hashable units the caller provides — integer ids in the
pipeline, words from :func:`whitespace_tokens` for plain-text fixtures — so
the module stays tokenizer-agnostic.

With ``smoothing="none"`` (the default) any zero precision zeroes the score;
``smoothing="add_one"`` adds one to the matched and total counts of every
order above 1, which keeps tiny fixtures off the floor. Orders for which no
hypothesis is long enough to have any n-grams are undefined and drop out of
the geometric mean, so identical hypothesis/reference lists score exactly
100 regardless of segment lengths.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus_io import TestExample

SMOOTHING_MODES = ("none", "add_one")


@dataclass(frozen=True)
class EvalRecord:
    """BLEU for one (system, language pair, test set) cell."""

    system_id: str
    lang_pair: str
    testset_id: str
    bleu: float
    segment_count: int

    def __post_init__(self):
        if not 0 <= self.bleu <= 100:
            raise ValueError(f"bleu {self.bleu} outside [0, 100]")
        if self.segment_count < 1:
            raise ValueError("segment_count must be >= 1")


def _ngram_counts(tokens: Sequence, order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def corpus_bleu(
    hypotheses: Sequence[Sequence],
    references: Sequence[Sequence],
    max_order: int = 4,
    smoothing: str = "none",
) -> float:
    """Corpus BLEU in [0, 100] for parallel hypothesis/reference segment lists."""
    if smoothing not in SMOOTHING_MODES:
        raise ValueError(f"unknown smoothing {smoothing!r}; expected one of {SMOOTHING_MODES}")
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("need at least one segment")
    for i, ref in enumerate(references):
        if len(ref) == 0:
            raise ValueError(f"reference segment {i} is empty")

    matched = [0] * max_order
    total = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for k in range(1, max_order + 1):
            hyp_counts = _ngram_counts(hyp, k)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref, k)
            total[k - 1] += sum(hyp_counts.values())
            matched[k - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    orders_used = 0
    for k in range(max_order):
        m, t = matched[k], total[k]
        if smoothing == "add_one" and k > 0:
            m += 1
            t += 1
        if t == 0:
            # every hypothesis is shorter than k+1: the order is undefined and
            # excluded from the mean (so identical inputs always score 100)
            continue
        if m == 0:
            return 0.0
        log_sum += math.log(m / t)
        orders_used += 1
    if orders_used == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / orders_used)


def whitespace_tokens(text: str) -> list[str]:
    """Whitespace-splitting adapter for scoring plain-text fixtures."""
    return text.split()


def score_system(
    outputs: Mapping[str, Sequence],
    testset: Sequence[TestExample],
    system_id: str,
    testset_id: str = "default",
    max_order: int = 4,
    smoothing: str = "none",
) -> list[EvalRecord]:
    """Group a test set by language pair and BLEU-score each group.

    ``outputs`` maps example_id to the hypothesis token sequence. Every
    example must have a hypothesis; the error lists any that are missing.
    Records are sorted by lang_pair, so the result is order-invariant.
    """
    missing = [ex.example_id for ex in testset if ex.example_id not in outputs]
    if missing:
        raise ValueError(f"missing hypotheses for {len(missing)} example(s): {', '.join(sorted(missing))}")
    groups: dict[str, list[TestExample]] = {}
    for ex in testset:
        groups.setdefault(ex.pair, []).append(ex)
    records = []
    for pair in sorted(groups):
        members = groups[pair]
        bleu = corpus_bleu(
            [list(outputs[ex.example_id]) for ex in members],
            [ex.target_tokens for ex in members],
            max_order=max_order,
            smoothing=smoothing,
        )
        records.append(
            EvalRecord(
                system_id=system_id,
                lang_pair=pair,
                testset_id=testset_id,
                bleu=bleu,
                segment_count=len(members),
            )
        )
    return records
