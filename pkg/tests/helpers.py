"""Independent oracles and synthetic-data builders shared across tests.

The oracles deliberately avoid the code paths they check: substring overlap
is recomputed by dynamic programming, BLEU by direct list-based n-gram
counting.
"""

import math
import random

import numpy as np

from contamkit.corpus_io import CorpusDocument, TestExample
from contamkit.ngram_index import NGramIndex, ScanConfig, build_index


def lcs_substring_length(a, b) -> int:
    """Length of the longest common contiguous substring, by classic DP.

    Rows iterate over ``a``; the column dimension (over ``b``) is vectorized.
    """
    if not a or not b:
        return 0
    col = np.asarray(b, dtype=np.int64)
    prev = np.zeros(len(b), dtype=np.int64)
    shifted = np.zeros(len(b), dtype=np.int64)
    best = 0
    for x in a:
        shifted[0] = 0
        shifted[1:] = prev[:-1]
        prev = np.where(col == x, shifted + 1, 0)
        m = int(prev.max())
        if m > best:
            best = m
    return best


def best_overlap(field, docs) -> int:
    """Longest common substring between ``field`` and any single doc."""
    return max((lcs_substring_length(field, doc) for doc in docs), default=0)


def maximal_common_substrings(field, doc, min_len) -> set[tuple[int, int, int]]:
    """All maximal common substrings of length >= min_len, by full DP.

    Returns (corpus_start, example_start, length) triples. A run is maximal
    when the next diagonal cell mismatches or falls off either end.
    """
    d, f = len(doc), len(field)
    run = [[0] * (f + 1) for _ in range(d + 1)]
    spans = set()
    for i in range(1, d + 1):
        for j in range(1, f + 1):
            if doc[i - 1] == field[j - 1]:
                run[i][j] = run[i - 1][j - 1] + 1
    for i in range(1, d + 1):
        for j in range(1, f + 1):
            length = run[i][j]
            if length < min_len:
                continue
            ends_run = i == d or j == f or doc[i] != field[j]
            if ends_run:
                spans.add((i - length, j - length, length))
    return spans


def brute_bleu(hypotheses, references, max_order=4) -> float:
    """BLEU recomputed with plain lists and .count(), no Counter, no clipping dict."""
    matched = [0] * max_order
    total = [0] * max_order
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    for hyp, ref in zip(hypotheses, references):
        for k in range(1, max_order + 1):
            hyp_grams = [tuple(hyp[i : i + k]) for i in range(len(hyp) - k + 1)]
            ref_grams = [tuple(ref[i : i + k]) for i in range(len(ref) - k + 1)]
            total[k - 1] += len(hyp_grams)
            for gram in set(hyp_grams):
                matched[k - 1] += min(hyp_grams.count(gram), ref_grams.count(gram))
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    orders_used = 0
    for m, t in zip(matched, total):
        if t == 0:
            continue  # order undefined: no hypothesis n-grams at this length
        if m == 0:
            return 0.0
        log_sum += math.log(m / t)
        orders_used += 1
    if orders_used == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / orders_used)


def docs_from_tokens(token_lists, category="monolingual", lang="") -> list[CorpusDocument]:
    return [
        CorpusDocument(doc_id=f"d{i}", tokens=list(tokens), category=category, lang=lang)
        for i, tokens in enumerate(token_lists)
    ]


def index_of(token_lists, n=8, bits=64) -> NGramIndex:
    return build_index(docs_from_tokens(token_lists), ScanConfig(ngram_order=n), fingerprint_bits=bits)


def make_example(example_id, source_tokens, target_tokens, pair=("de", "en")) -> TestExample:
    return TestExample(
        example_id=example_id,
        src_lang=pair[0],
        tgt_lang=pair[1],
        source_text=" ".join(f"s{t}" for t in source_tokens),
        target_text=" ".join(f"t{t}" for t in target_tokens),
        source_tokens=list(source_tokens),
        target_tokens=list(target_tokens),
    )


def random_tokens(rng: random.Random, length, vocab) -> list[int]:
    return [rng.randrange(vocab) for _ in range(length)]


def plant(field, segment, at) -> None:
    """Overwrite field[at:at+len(segment)] with segment, in place."""
    field[at : at + len(segment)] = segment
