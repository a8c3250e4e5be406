"""Maximal token-span matching between test-example fields and a corpus.

A field is split into its n-grams (duplicates looked up once), each n-gram is
queried against the index, and every hit is extended left and right as far as
tokens keep agreeing — producing maximal match spans. The longest span per
field, divided by the field's own token count, is that field's overlap
fraction; the combined contamination score of an example is the larger of the
two per-field fractions.

Token ids are compared raw: no normalization, no re-tokenization. Fields
shorter than the n-gram order are handled by searching the entire field as a
single gram, so such fields only ever score 0 or 1.

All functions here are pure given an immutable index; examples may be scored
in parallel with no shared state.
"""

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus_io import TestExample
from .ngram_index import NGramIndex, ScanConfig


@dataclass(frozen=True)
class MatchSpan:
    """A maximal region where corpus and field tokens agree pairwise.

    ``corpus[corpus_start + i] == field[example_start + i]`` for all
    ``i < length``, and extending one token in either direction breaks
    agreement or runs off a boundary. Spans grown from n-gram seeds have
    ``length >= ngram_order``; whole-field searches of short fields yield
    spans with ``length == len(field)``.
    """

    doc_ref: int
    corpus_start: int
    example_start: int
    length: int


@dataclass(frozen=True)
class ContaminationScore:
    """Per-field overlap fractions and the spans that produced them."""

    s_source: float
    s_target: float
    longest_source: MatchSpan | None
    longest_target: MatchSpan | None

    @property
    def combined(self) -> float:
        return max(self.s_source, self.s_target)


def find_spans(field: Sequence[int], index: NGramIndex, config: ScanConfig) -> list[MatchSpan]:
    """All maximal match spans between ``field`` and any indexed document.

    Spans are deduplicated (seeds inside the same maximal region extend to the
    same span) and returned sorted by (doc_ref, corpus_start, example_start).
    """
    if config.ngram_order != index.ngram_order:
        raise ValueError(
            f"config ngram_order {config.ngram_order} does not match index ngram_order {index.ngram_order}"
        )
    if len(field) == 0:
        raise ValueError("field must be non-empty")
    n = index.ngram_order
    field = list(field)
    if len(field) < n:
        return _whole_field_spans(field, index)

    grams: dict[tuple[int, ...], list[int]] = {}
    for j in range(len(field) - n + 1):
        grams.setdefault(tuple(field[j : j + n]), []).append(j)

    found: set[MatchSpan] = set()
    covered: dict[tuple[int, int], list[tuple[int, int]]] = {}  # (doc_ref, diagonal) -> field intervals
    for gram, offsets in grams.items():
        for loc in index.query(gram):
            for j in offsets:
                diag = loc.offset - j
                intervals = covered.setdefault((loc.doc_ref, diag), [])
                if any(lo <= j < hi for lo, hi in intervals):
                    continue
                span = _extend(field, index, loc.doc_ref, loc.offset, j, n)
                intervals.append((span.example_start, span.example_start + span.length))
                found.add(span)
    return sorted(found, key=lambda s: (s.doc_ref, s.corpus_start, s.example_start))


def _extend(field: list[int], index: NGramIndex, doc_ref: int, i: int, j: int, length: int) -> MatchSpan:
    tokens = index.doc_tokens(doc_ref)
    while i > 0 and j > 0 and tokens[i - 1] == field[j - 1]:
        i -= 1
        j -= 1
        length += 1
    while i + length < len(tokens) and j + length < len(field) and tokens[i + length] == field[j + length]:
        length += 1
    return MatchSpan(doc_ref=doc_ref, corpus_start=i, example_start=j, length=length)


def _whole_field_spans(field: list[int], index: NGramIndex) -> list[MatchSpan]:
    # Exact whole-field occurrence scan; linear in corpus size, only reached
    # for fields shorter than the n-gram order.
    k = len(field)
    first = field[0]
    spans = []
    for ref in index.refs():
        tokens = index.doc_tokens(ref)
        for off in range(len(tokens) - k + 1):
            if tokens[off] == first and tokens[off : off + k] == field:
                spans.append(MatchSpan(doc_ref=ref, corpus_start=off, example_start=0, length=k))
    return spans


def longest_match(spans: Iterable[MatchSpan]) -> MatchSpan | None:
    """The span of maximal length; ties broken by smallest
    (doc_ref, corpus_start, example_start). ``None`` on empty input."""
    best = None
    best_key = None
    for span in spans:
        key = (-span.length, span.doc_ref, span.corpus_start, span.example_start)
        if best_key is None or key < best_key:
            best, best_key = span, key
    return best


def score_field(field: Sequence[int], index: NGramIndex, config: ScanConfig) -> tuple[float, MatchSpan | None]:
    """Overlap fraction of a single field: longest span length / field length."""
    best = longest_match(find_spans(field, index, config))
    if best is None:
        return 0.0, None
    return best.length / len(field), best


def score_example(example: TestExample, index: NGramIndex, config: ScanConfig) -> ContaminationScore:
    """Score source and target fields independently from their own longest spans."""
    s_source, span_source = score_field(example.source_tokens, index, config)
    s_target, span_target = score_field(example.target_tokens, index, config)
    return ContaminationScore(
        s_source=s_source,
        s_target=s_target,
        longest_source=span_source,
        longest_target=span_target,
    )


def _span_record(span: MatchSpan | None, index: NGramIndex) -> dict | None:
    if span is None:
        return None
    return {
        "doc_id": index.doc_id(span.doc_ref),
        "corpus_start": span.corpus_start,
        "example_start": span.example_start,
        "length": span.length,
    }


def score_record(example_id: str, score: ContaminationScore, index: NGramIndex) -> dict:
    """Dump-format record for one scored example."""
    return {
        "example_id": example_id,
        "s_source": score.s_source,
        "s_target": score.s_target,
        "longest_source": _span_record(score.longest_source, index),
        "longest_target": _span_record(score.longest_target, index),
    }


def write_scores(items: Iterable[tuple[str, ContaminationScore]], index: NGramIndex, path) -> int:
    """Write scored examples as JSON-lines; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for example_id, score in items:
            f.write(json.dumps(score_record(example_id, score, index), ensure_ascii=False))
            f.write("\n")
            count += 1
    return count
