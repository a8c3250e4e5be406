import random

import pytest
from hypothesis import given, settings, strategies as st

from contamkit.matcher import (
    MatchSpan,
    find_spans,
    longest_match,
    score_example,
    score_field,
)
from contamkit.ngram_index import ScanConfig

from helpers import (
    best_overlap,
    index_of,
    lcs_substring_length,
    make_example,
    maximal_common_substrings,
    plant,
    random_tokens,
)

CFG = ScanConfig()


def test_contained_field_yields_one_full_span():
    rng = random.Random(0)
    doc = random_tokens(rng, 40, 100)
    field = doc[5:17]
    index = index_of([doc])
    spans = find_spans(field, index, CFG)
    assert spans == [MatchSpan(doc_ref=0, corpus_start=5, example_start=0, length=12)]


def test_disjoint_field_yields_no_spans():
    index = index_of([[1] * 30])
    assert find_spans([2] * 12, index, CFG) == []


def test_two_planted_substrings_match_dp_oracle():
    rng = random.Random(1)
    doc = random_tokens(rng, 200, 1000)
    field = random_tokens(rng, 30, 1000)
    plant(field, doc[20:29], 0)    # length 9
    plant(field, doc[100:114], 12)  # length 14
    index = index_of([doc])
    spans = find_spans(field, index, CFG)
    assert sorted(s.length for s in spans) == [9, 14]
    oracle = maximal_common_substrings(field, doc, min_len=8)
    assert {(s.corpus_start, s.example_start, s.length) for s in spans} == oracle


def test_longest_match_empty_and_lengths():
    assert longest_match([]) is None
    a = MatchSpan(0, 0, 0, 9)
    b = MatchSpan(1, 3, 2, 14)
    assert longest_match([a, b]) == b


def test_longest_match_tie_breaks_toward_smallest_doc():
    d1 = MatchSpan(doc_ref=1, corpus_start=7, example_start=0, length=10)
    d2 = MatchSpan(doc_ref=2, corpus_start=0, example_start=0, length=10)
    assert longest_match([d2, d1]) == d1
    same_doc = MatchSpan(doc_ref=1, corpus_start=3, example_start=5, length=10)
    assert longest_match([d1, same_doc]) == same_doc


def test_score_source_present_target_absent():
    rng = random.Random(2)
    doc = random_tokens(rng, 50, 1000)
    ex = make_example("e", source_tokens=doc[10:30], target_tokens=[10_000 + i for i in range(20)])
    index = index_of([doc])
    score = score_example(ex, index, CFG)
    assert score.s_source == 1.0
    assert score.s_target == 0.0
    assert score.longest_source.length == 20
    assert score.longest_target is None
    assert score.combined == 1.0


def test_overlap_fraction_from_planted_substring():
    rng = random.Random(3)
    doc = random_tokens(rng, 100, 1000)
    field = random_tokens(rng, 20, 1000)
    plant(field, doc[40:52], 4)  # 12 of 20 tokens
    index = index_of([doc])
    s, span = score_field(field, index, CFG)
    assert span.length == 12 == lcs_substring_length(field, doc)
    assert s == 0.6


def test_example_identical_to_doc_pair_scores_one_one():
    rng = random.Random(4)
    source = random_tokens(rng, 25, 1000)
    target = random_tokens(rng, 30, 1000)
    ex = make_example("e", source, target)
    index = index_of([source, target])
    score = score_example(ex, index, CFG)
    assert (score.s_source, score.s_target) == (1.0, 1.0)


def test_field_swap_swaps_scores():
    rng = random.Random(5)
    doc = random_tokens(rng, 80, 50)
    a = random_tokens(rng, 20, 50)
    b = random_tokens(rng, 24, 50)
    plant(a, doc[0:10], 0)
    index = index_of([doc])
    fwd = score_example(make_example("e", a, b), index, CFG)
    rev = score_example(make_example("e", b, a), index, CFG)
    assert (fwd.s_source, fwd.s_target) == (rev.s_target, rev.s_source)


def test_empty_field_rejected():
    with pytest.raises(ValueError):
        find_spans([], index_of([[1] * 10]), CFG)


def test_mismatched_config_rejected():
    with pytest.raises(ValueError, match="ngram_order"):
        find_spans([1] * 10, index_of([[1] * 10], n=4), CFG)


# -- short-field fallback -------------------------------------------------------


def test_short_field_scores_one_when_planted():
    rng = random.Random(6)
    doc = random_tokens(rng, 50, 1000)
    field = doc[30:35]  # 5 tokens < n
    index = index_of([doc])
    s, span = score_field(field, index, CFG)
    assert s == 1.0
    assert span == MatchSpan(doc_ref=0, corpus_start=30, example_start=0, length=5)


def test_short_field_scores_zero_when_only_partially_present():
    doc = [1, 2, 3, 4, 9, 9, 9, 9, 9, 9]
    field = [1, 2, 3, 4, 5]  # 4-of-5 prefix present, whole field absent
    index = index_of([doc])
    assert score_field(field, index, CFG) == (0.0, None)


def test_short_field_dp_oracle_agreement():
    rng = random.Random(7)
    for _ in range(50):
        doc = random_tokens(rng, 60, 4)
        field = random_tokens(rng, rng.randrange(1, 8), 4)
        index = index_of([doc])
        s, _ = score_field(field, index, CFG)
        contained = lcs_substring_length(field, doc) == len(field)
        assert s == (1.0 if contained else 0.0)


# -- maximality and oracle properties -------------------------------------------


def _assert_maximal(span, field, index):
    tokens = index.doc_tokens(span.doc_ref)
    i, j, length = span.corpus_start, span.example_start, span.length
    assert tokens[i : i + length] == field[j : j + length]
    if i > 0 and j > 0:
        assert tokens[i - 1] != field[j - 1]
    if i + length < len(tokens) and j + length < len(field):
        assert tokens[i + length] != field[j + length]


def test_spans_are_maximal_on_random_inputs():
    rng = random.Random(8)
    for _ in range(100):
        docs = [random_tokens(rng, rng.randrange(8, 60), 5) for _ in range(4)]
        field = random_tokens(rng, rng.randrange(8, 40), 5)
        index = index_of(docs)
        for span in find_spans(field, index, CFG):
            _assert_maximal(span, field, index)


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_score_matches_dp_oracle_when_at_least_n(data):
    vocab = data.draw(st.integers(min_value=2, max_value=6))
    docs = data.draw(
        st.lists(
            st.lists(st.integers(min_value=0, max_value=vocab - 1), min_size=0, max_size=60),
            min_size=1,
            max_size=4,
        )
    )
    field = data.draw(st.lists(st.integers(min_value=0, max_value=vocab - 1), min_size=8, max_size=40))
    index = index_of(docs)
    s, span = score_field(field, index, CFG)
    best = best_overlap(field, docs)
    if best >= 8:
        assert span is not None and span.length == best
        assert s == best / len(field)
    else:
        assert (s, span) == (0.0, None)


def test_monotonicity_appending_tokens_never_decreases_score():
    rng = random.Random(9)
    for _ in range(30):
        docs = [random_tokens(rng, 40, 6) for _ in range(3)]
        field = random_tokens(rng, 20, 6)
        before, _ = score_field(field, index_of(docs), CFG)
        grow = rng.randrange(len(docs))
        docs[grow] = docs[grow] + field[: rng.randrange(0, len(field) + 1)]
        after, _ = score_field(field, index_of(docs), CFG)
        assert after >= before
