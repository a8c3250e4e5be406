"""Exact n-gram location index over tokenized corpora.

Every position ``p`` of every document with ``len >= n`` contributes exactly
one posting, keyed by a 64-bit rolling polynomial fingerprint of the n-gram
starting at ``p``:

    h(g) = sum_i g[i] * BASE^(n-1-i)  mod 2^64,  BASE = 0x100000001B3

Fingerprints can collide, so :meth:`NGramIndex.query` verifies every
candidate location token-by-token against the stored documents before
returning it — results are exact regardless of fingerprint width. A weakened
``fingerprint_bits`` (e.g. 8) makes collisions frequent on purpose, which is
useful for exercising the verification path.

Indexes are deterministic: postings for a fingerprint are stored in document
order then offset order, so building twice from the same corpus (or merging
per-shard indexes with :func:`merge_indexes`) yields identical structures and
identical files. A built index is immutable and safe to share across threads.

File layout (magic ``CTKX``, little-endian): u32 ngram order, u32 fingerprint
bits, u64 doc count, u64 posting count; per document u32 id length, id bytes,
u32 token count, u32 tokens; u64 fingerprint block count; then per block
(ascending fingerprint) u64 fingerprint, u32 posting count, and u32
(doc_ref, offset) pairs. Document tokens are stored in the file so a loaded
index can verify queries and serve :meth:`token_at` without the source shards.
"""

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus_io import CorpusDocument, DuplicateIdError

FINGERPRINT_BASE = 0x100000001B3
_MASK64 = (1 << 64) - 1
_INDEX_MAGIC = b"CTKX"
_U32_MAX = 2**32 - 1


class IndexCapacityError(RuntimeError):
    """The corpus exceeds what one index file can address; split the corpus into smaller shards."""


@dataclass(frozen=True)
class ScanConfig:
    """Overlap-scan parameters: seed n-gram order and contamination threshold."""

    ngram_order: int = 8
    threshold: float = 0.7

    def __post_init__(self):
        if self.ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must be in (0, 1]")


@dataclass(frozen=True)
class Location:
    """A document reference and token offset where an n-gram occurs."""

    doc_ref: int
    offset: int


def fingerprint(tokens: Sequence[int], bits: int = 64) -> int:
    """Polynomial fingerprint of a token sequence, truncated to ``bits``."""
    h = 0
    for t in tokens:
        h = (h * FINGERPRINT_BASE + t) & _MASK64
    if bits < 64:
        h &= (1 << bits) - 1
    return h


class NGramIndex:
    """Fingerprint-keyed postings from every corpus n-gram to its locations."""

    def __init__(self, ngram_order: int, fingerprint_bits: int = 64):
        if ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")
        if not 1 <= fingerprint_bits <= 64:
            raise ValueError("fingerprint_bits must be in [1, 64]")
        self.ngram_order = ngram_order
        self.fingerprint_bits = fingerprint_bits
        self._doc_ids: list[str] = []
        self._doc_tokens: list[list[int]] = []
        self._ref_by_id: dict[str, int] = {}
        self._postings: dict[int, list[Location]] = {}
        self._posting_count = 0

    # -- construction ------------------------------------------------------

    def _add_document(self, doc: CorpusDocument):
        if doc.doc_id in self._ref_by_id:
            raise DuplicateIdError(f"duplicate doc_id {doc.doc_id!r}")
        if len(self._doc_ids) > _U32_MAX:
            raise IndexCapacityError("too many documents for one index; split the corpus into smaller shards")
        if len(doc.tokens) > _U32_MAX:
            raise IndexCapacityError(f"doc {doc.doc_id!r} too long for one index; split the corpus into smaller shards")
        ref = len(self._doc_ids)
        tokens = list(doc.tokens)
        self._ref_by_id[doc.doc_id] = ref
        self._doc_ids.append(doc.doc_id)
        self._doc_tokens.append(tokens)
        n = self.ngram_order
        if len(tokens) < n:
            return
        mask = (1 << self.fingerprint_bits) - 1 if self.fingerprint_bits < 64 else _MASK64
        shift_out = pow(FINGERPRINT_BASE, n, 1 << 64)
        h = fingerprint(tokens[:n])
        self._postings.setdefault(h & mask, []).append(Location(ref, 0))
        for off in range(1, len(tokens) - n + 1):
            h = (h * FINGERPRINT_BASE + tokens[off + n - 1] - tokens[off - 1] * shift_out) & _MASK64
            self._postings.setdefault(h & mask, []).append(Location(ref, off))
        self._posting_count += len(tokens) - n + 1

    # -- queries -----------------------------------------------------------

    def query(self, gram: Sequence[int]) -> list[Location]:
        """Return exactly the locations where ``gram`` occurs.

        Candidates from the fingerprint table are verified token-by-token, so
        fingerprint collisions never leak into the result.
        """
        if len(gram) != self.ngram_order:
            raise ValueError(f"gram has {len(gram)} tokens, expected {self.ngram_order}")
        wanted = list(gram)
        fp = fingerprint(wanted, self.fingerprint_bits)
        hits = []
        for loc in self._postings.get(fp, ()):
            tokens = self._doc_tokens[loc.doc_ref]
            if tokens[loc.offset : loc.offset + self.ngram_order] == wanted:
                hits.append(loc)
        return hits

    def token_at(self, doc_ref: int, offset: int) -> int:
        if not 0 <= doc_ref < len(self._doc_tokens):
            raise IndexError(f"doc ref {doc_ref} out of range (0..{len(self._doc_tokens) - 1})")
        tokens = self._doc_tokens[doc_ref]
        if not 0 <= offset < len(tokens):
            raise IndexError(f"offset {offset} out of range for doc {self._doc_ids[doc_ref]!r} of length {len(tokens)}")
        return tokens[offset]

    def doc_len(self, doc_ref: int) -> int:
        if not 0 <= doc_ref < len(self._doc_tokens):
            raise IndexError(f"doc ref {doc_ref} out of range (0..{len(self._doc_tokens) - 1})")
        return len(self._doc_tokens[doc_ref])

    def doc_id(self, doc_ref: int) -> str:
        return self._doc_ids[doc_ref]

    def doc_ref(self, doc_id: str) -> int:
        return self._ref_by_id[doc_id]

    def doc_tokens(self, doc_ref: int) -> list[int]:
        """The stored token sequence of a document; treat as read-only."""
        return self._doc_tokens[doc_ref]

    def refs(self) -> range:
        return range(len(self._doc_ids))

    @property
    def doc_count(self) -> int:
        return len(self._doc_ids)

    @property
    def posting_count(self) -> int:
        return self._posting_count

    # -- persistence -------------------------------------------------------

    def save(self, path):
        """Write the index to a single file, bit-exact across platforms."""
        with open(path, "wb") as f:
            f.write(_INDEX_MAGIC)
            f.write(struct.pack("<IIQQ", self.ngram_order, self.fingerprint_bits, self.doc_count, self._posting_count))
            for doc_id, tokens in zip(self._doc_ids, self._doc_tokens):
                if any(t > _U32_MAX for t in tokens):
                    raise IndexCapacityError(f"doc {doc_id!r}: token id exceeds 32-bit storage")
                id_bytes = doc_id.encode("utf-8")
                f.write(struct.pack("<I", len(id_bytes)))
                f.write(id_bytes)
                f.write(struct.pack("<I", len(tokens)))
                f.write(struct.pack(f"<{len(tokens)}I", *tokens))
            f.write(struct.pack("<Q", len(self._postings)))
            for fp in sorted(self._postings):
                locs = self._postings[fp]
                f.write(struct.pack("<QI", fp, len(locs)))
                f.write(struct.pack(f"<{2 * len(locs)}I", *(v for loc in locs for v in (loc.doc_ref, loc.offset))))

    @classmethod
    def load(cls, path) -> "NGramIndex":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != _INDEX_MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}, expected {_INDEX_MAGIC!r}")
            ngram_order, bits, doc_count, posting_count = struct.unpack("<IIQQ", f.read(24))
            index = cls(ngram_order, bits)
            for _ in range(doc_count):
                (id_len,) = struct.unpack("<I", f.read(4))
                doc_id = f.read(id_len).decode("utf-8")
                (n_tok,) = struct.unpack("<I", f.read(4))
                tokens = list(struct.unpack(f"<{n_tok}I", f.read(4 * n_tok)))
                index._ref_by_id[doc_id] = len(index._doc_ids)
                index._doc_ids.append(doc_id)
                index._doc_tokens.append(tokens)
            (block_count,) = struct.unpack("<Q", f.read(8))
            total = 0
            for _ in range(block_count):
                fp, count = struct.unpack("<QI", f.read(12))
                flat = struct.unpack(f"<{2 * count}I", f.read(8 * count))
                index._postings[fp] = [Location(flat[2 * i], flat[2 * i + 1]) for i in range(count)]
                total += count
            if total != posting_count:
                raise ValueError(f"{path}: header claims {posting_count} postings, file has {total}")
            index._posting_count = total
        return index


def build_index(corpus: Iterable[CorpusDocument], config: ScanConfig, fingerprint_bits: int = 64) -> NGramIndex:
    """Index a document stream; deterministic for a given corpus order.

    Documents shorter than the n-gram order contribute no postings but stay
    in the doc table.
    """
    index = NGramIndex(config.ngram_order, fingerprint_bits)
    for doc in corpus:
        index._add_document(doc)
    return index


def merge_indexes(parts: Sequence[NGramIndex]) -> NGramIndex:
    """Merge per-shard indexes, in shard order, into one index.

    Equivalent to building over the concatenated shards: document refs are
    reassigned in part order and postings keep part order then offset order.
    """
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    merged = NGramIndex(first.ngram_order, first.fingerprint_bits)
    for part in parts:
        if (part.ngram_order, part.fingerprint_bits) != (first.ngram_order, first.fingerprint_bits):
            raise ValueError("cannot merge indexes with different ngram_order or fingerprint_bits")
        base = merged.doc_count
        for doc_id, tokens in zip(part._doc_ids, part._doc_tokens):
            if doc_id in merged._ref_by_id:
                raise DuplicateIdError(f"duplicate doc_id {doc_id!r} across shards")
            merged._ref_by_id[doc_id] = len(merged._doc_ids)
            merged._doc_ids.append(doc_id)
            merged._doc_tokens.append(tokens)
        for fp, locs in part._postings.items():
            merged._postings.setdefault(fp, []).extend(
                Location(loc.doc_ref + base, loc.offset) for loc in locs
            )
        merged._posting_count += part._posting_count
    return merged
