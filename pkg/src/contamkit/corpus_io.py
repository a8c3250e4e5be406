"""Readers and writers for tokenized corpora, test sets, and training batch streams.

On-disk formats (all little-endian, all line-oriented files UTF-8):

* Corpus JSON-lines (``jsonl``): one document per line,
  ``{"doc_id": str, "tokens": [int, ...], "category": str, "lang": str}``.
  ``category`` defaults to ``monolingual`` when absent; ``lang`` defaults to
  ``""``. Rendered contamination documents may carry an extra ``"text"`` field
  with the raw text they were rendered from.
* Corpus binary (``ctk``): magic ``CTK1``, u32 doc count, then per document
  u32 id length, id bytes, u32 token count, u32 tokens. This is the compact
  format for the n-gram scanner's hot path; it carries ids and tokens only
  (category/lang come back as defaults on read).
* Test-set JSON-lines: ``{"example_id", "src_lang", "tgt_lang",
  "source_text", "target_text", "source_tokens", "target_tokens"}``.
* Batch-stream JSON-lines: ``{"step": int, "slot": int, "doc": <document>}``,
  step-major then slot-minor.

Readers stream one record at a time and never materialize a whole shard;
``read_corpus`` additionally accepts a directory of shards (read in sorted
filename order) or an explicit list of shard paths. Documents are plain
dataclasses and safe to hand between threads once read; writers assume a
single owner per output file.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

FORMAT_JSONL = "jsonl"
FORMAT_BINARY = "ctk"
CORPUS_FORMATS = (FORMAT_JSONL, FORMAT_BINARY)

CATEGORY_MONOLINGUAL = "monolingual"
CATEGORY_PARALLEL = "parallel"
CATEGORY_CONTAMINATION = "contamination"
CATEGORIES = (CATEGORY_MONOLINGUAL, CATEGORY_PARALLEL, CATEGORY_CONTAMINATION)

_BINARY_MAGIC = b"CTK1"
_U32_MAX = 2**32 - 1


class CorpusFormatError(ValueError):
    """A record does not conform to its documented format."""


class DuplicateIdError(ValueError):
    """The same id occurs more than once where uniqueness is required."""


@dataclass
class CorpusDocument:
    """One training document: an id plus its token-id sequence.

    Token ids are opaque non-negative integers; no normalization of any kind
    is applied to them. ``text`` is only populated for rendered contamination
    documents whose consumer tokenizes late.
    """

    doc_id: str
    tokens: list[int]
    category: str = CATEGORY_MONOLINGUAL
    lang: str = ""
    text: str | None = None


@dataclass
class TestExample:
    """One evaluation example with parallel text and token fields.

    Tokens are authoritative for overlap matching; the text fields are kept
    verbatim for rendering.
    """

    __test__ = False  # not a pytest class, despite the name

    example_id: str
    src_lang: str
    tgt_lang: str
    source_text: str
    target_text: str
    source_tokens: list[int]
    target_tokens: list[int]

    def __post_init__(self):
        if not self.source_tokens or not self.target_tokens:
            raise ValueError(f"example {self.example_id!r}: token fields must be non-empty")
        if self.src_lang == self.tgt_lang:
            raise ValueError(f"example {self.example_id!r}: src_lang and tgt_lang must differ")

    @property
    def lang_pair(self) -> tuple[str, str]:
        return (self.src_lang, self.tgt_lang)

    @property
    def pair(self) -> str:
        return f"{self.src_lang}-{self.tgt_lang}"


@dataclass
class BatchStream:
    """An ordered sequence of training batches, each with a fixed slot count."""

    batch_size: int
    steps: list[list[CorpusDocument]] = field(default_factory=list)

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for step, batch in enumerate(self.steps):
            if len(batch) != self.batch_size:
                raise ValueError(
                    f"step {step}: batch has {len(batch)} slots, expected {self.batch_size}"
                )


def _check_tokens(value, where: str) -> list[int]:
    if not isinstance(value, list) or any(not isinstance(t, int) or isinstance(t, bool) or t < 0 for t in value):
        raise CorpusFormatError(f"{where}: field 'tokens' must be a list of non-negative integers")
    return value


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise CorpusFormatError(f"{where}: missing field '{key}'")
    return record[key]


def doc_to_record(doc: CorpusDocument) -> dict:
    record = {
        "doc_id": doc.doc_id,
        "tokens": doc.tokens,
        "category": doc.category,
        "lang": doc.lang,
    }
    if doc.text is not None:
        record["text"] = doc.text
    return record


def doc_from_record(record: dict, where: str) -> CorpusDocument:
    if not isinstance(record, dict):
        raise CorpusFormatError(f"{where}: record must be a JSON object")
    doc_id = _require(record, "doc_id", where)
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusFormatError(f"{where}: field 'doc_id' must be a non-empty string")
    tokens = _check_tokens(_require(record, "tokens", where), where)
    category = record.get("category", CATEGORY_MONOLINGUAL)
    if category not in CATEGORIES:
        raise CorpusFormatError(f"{where}: field 'category' must be one of {CATEGORIES}")
    lang = record.get("lang", "")
    if not isinstance(lang, str):
        raise CorpusFormatError(f"{where}: field 'lang' must be a string")
    text = record.get("text")
    if text is not None and not isinstance(text, str):
        raise CorpusFormatError(f"{where}: field 'text' must be a string")
    return CorpusDocument(doc_id=doc_id, tokens=tokens, category=category, lang=lang, text=text)


def corpus_shards(path, fmt: str = FORMAT_JSONL) -> list[Path]:
    """Resolve a corpus path to an ordered shard list.

    A directory expands to its ``*.jsonl`` / ``*.ctk`` files sorted by name;
    a file is a single shard; a list/tuple is taken as given.
    """
    if isinstance(path, (list, tuple)):
        return [Path(p) for p in path]
    p = Path(path)
    if p.is_dir():
        suffix = ".jsonl" if fmt == FORMAT_JSONL else ".ctk"
        shards = sorted(q for q in p.iterdir() if q.suffix == suffix)
        if not shards:
            raise FileNotFoundError(f"{p}: no {suffix} shards found")
        return shards
    return [p]


def read_corpus(path, fmt: str = FORMAT_JSONL) -> Iterator[CorpusDocument]:
    """Stream documents from a corpus file, shard directory, or shard list.

    Yields documents in shard order then record order. Raises
    :class:`CorpusFormatError` naming shard, line, and field on malformed
    input and :class:`DuplicateIdError` on repeated doc_ids.
    """
    if fmt not in CORPUS_FORMATS:
        raise ValueError(f"unknown corpus format {fmt!r}; expected one of {CORPUS_FORMATS}")
    seen: set[str] = set()
    for shard in corpus_shards(path, fmt):
        reader = _read_jsonl_shard if fmt == FORMAT_JSONL else _read_binary_shard
        for doc in reader(shard):
            if doc.doc_id in seen:
                raise DuplicateIdError(f"{shard}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            yield doc


def _read_jsonl_shard(shard: Path) -> Iterator[CorpusDocument]:
    with open(shard, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            where = f"{shard}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{where}: invalid JSON ({e.msg})") from e
            yield doc_from_record(record, where)


def _read_binary_shard(shard: Path) -> Iterator[CorpusDocument]:
    with open(shard, "rb") as f:
        magic = f.read(4)
        if magic != _BINARY_MAGIC:
            raise CorpusFormatError(f"{shard}: bad magic {magic!r}, expected {_BINARY_MAGIC!r}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, shard, "doc count"))
        for i in range(count):
            where = f"{shard}: doc #{i}"
            (id_len,) = struct.unpack("<I", _read_exact(f, 4, shard, f"{where} id length"))
            doc_id = _read_exact(f, id_len, shard, f"{where} id").decode("utf-8")
            (n_tok,) = struct.unpack("<I", _read_exact(f, 4, shard, f"{where} token count"))
            raw = _read_exact(f, 4 * n_tok, shard, f"{where} tokens")
            tokens = list(struct.unpack(f"<{n_tok}I", raw))
            yield CorpusDocument(doc_id=doc_id, tokens=tokens)
        if f.read(1):
            raise CorpusFormatError(f"{shard}: trailing bytes after {count} documents")


def _read_exact(f, size: int, shard: Path, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CorpusFormatError(f"{shard}: truncated while reading {what}")
    return data


def write_corpus(docs: Iterable[CorpusDocument], path, fmt: str = FORMAT_JSONL) -> int:
    """Write documents to a single shard; returns the document count."""
    if fmt == FORMAT_JSONL:
        count = 0
        with open(path, "w", encoding="utf-8") as f:
            for doc in docs:
                f.write(json.dumps(doc_to_record(doc), ensure_ascii=False))
                f.write("\n")
                count += 1
        return count
    if fmt == FORMAT_BINARY:
        return _write_binary_shard(list(docs), path)
    raise ValueError(f"unknown corpus format {fmt!r}; expected one of {CORPUS_FORMATS}")


def _write_binary_shard(docs: list[CorpusDocument], path) -> int:
    with open(path, "wb") as f:
        f.write(_BINARY_MAGIC)
        f.write(struct.pack("<I", len(docs)))
        for doc in docs:
            if any(t > _U32_MAX for t in doc.tokens):
                raise CorpusFormatError(f"{path}: doc {doc.doc_id!r}: token id exceeds 32-bit storage")
            id_bytes = doc.doc_id.encode("utf-8")
            f.write(struct.pack("<I", len(id_bytes)))
            f.write(id_bytes)
            f.write(struct.pack("<I", len(doc.tokens)))
            f.write(struct.pack(f"<{len(doc.tokens)}I", *doc.tokens))
    return len(docs)


def example_to_record(ex: TestExample) -> dict:
    return {
        "example_id": ex.example_id,
        "src_lang": ex.src_lang,
        "tgt_lang": ex.tgt_lang,
        "source_text": ex.source_text,
        "target_text": ex.target_text,
        "source_tokens": ex.source_tokens,
        "target_tokens": ex.target_tokens,
    }


def read_testset(path) -> list[TestExample]:
    """Read a test set, enforcing unique ids and non-empty token fields."""
    examples = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{where}: invalid JSON ({e.msg})") from e
            example_id = _require(record, "example_id", where)
            if example_id in seen:
                raise DuplicateIdError(f"{where}: duplicate example_id {example_id!r}")
            seen.add(example_id)
            for key in ("src_lang", "tgt_lang", "source_text", "target_text"):
                value = _require(record, key, where)
                if not isinstance(value, str):
                    raise CorpusFormatError(f"{where}: field '{key}' must be a string")
            for key in ("source_tokens", "target_tokens"):
                tokens = _require(record, key, where)
                _check_tokens(tokens, where.replace("tokens", key))
                if not tokens:
                    raise CorpusFormatError(f"{where}: field '{key}' must be non-empty")
            try:
                examples.append(
                    TestExample(
                        example_id=example_id,
                        src_lang=record["src_lang"],
                        tgt_lang=record["tgt_lang"],
                        source_text=record["source_text"],
                        target_text=record["target_text"],
                        source_tokens=record["source_tokens"],
                        target_tokens=record["target_tokens"],
                    )
                )
            except ValueError as e:
                raise CorpusFormatError(f"{where}: {e}") from e
    return examples


def write_testset(examples: Iterable[TestExample], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(example_to_record(ex), ensure_ascii=False))
            f.write("\n")
            count += 1
    return count


def group_by_pair(examples: Iterable[TestExample]) -> dict[str, list[TestExample]]:
    """Group examples by their "src-tgt" pair string, preserving order."""
    groups: dict[str, list[TestExample]] = {}
    for ex in examples:
        groups.setdefault(ex.pair, []).append(ex)
    return groups


def write_stream(stream: BatchStream, path) -> int:
    """Write a batch stream as (step, slot, doc) records; returns slot count."""
    stream.validate()
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for step, batch in enumerate(stream.steps):
            for slot, doc in enumerate(batch):
                record = {"step": step, "slot": slot, "doc": doc_to_record(doc)}
                f.write(json.dumps(record, ensure_ascii=False))
                f.write("\n")
                count += 1
    return count


def read_stream(path) -> BatchStream:
    """Read a batch stream, checking slot coverage per step.

    Records must arrive step-major, slot-minor, starting at (0, 0). The batch
    size is taken from step 0; every step must then cover slots
    ``0..batch_size-1`` exactly once.
    """
    steps: list[list[CorpusDocument]] = []
    batch_size = None
    current: list[CorpusDocument] = []

    def close_step(where: str):
        nonlocal batch_size
        if batch_size is None:
            batch_size = len(current)
        elif len(current) != batch_size:
            raise CorpusFormatError(
                f"{where}: step {len(steps)} has {len(current)} slots, expected {batch_size}"
            )
        steps.append(list(current))
        current.clear()

    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{where}: invalid JSON ({e.msg})") from e
            step = _require(record, "step", where)
            slot = _require(record, "slot", where)
            doc = doc_from_record(_require(record, "doc", where), where)
            if step == len(steps) + 1 and slot == 0:
                close_step(where)
            if step != len(steps) or slot != len(current):
                raise CorpusFormatError(
                    f"{where}: expected (step {len(steps)}, slot {len(current)}), got ({step}, {slot})"
                )
            current.append(doc)
    if current:
        close_step(str(path))
    if batch_size is None:
        return BatchStream(batch_size=0, steps=[])
    return BatchStream(batch_size=batch_size, steps=steps)
