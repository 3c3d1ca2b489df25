"""Domain types for NER probability output and BIO span decoding.

A chunk is one model output unit: T tokens, each carrying a K-class
probability vector over a BIO class schema (one O class plus B/I per
entity type). Everything downstream (density maps, features, the
strong/weak classifier) consumes these types.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import (
    ParseError,
    ProbabilityOutOfRange,
    ProbabilitySumViolation,
    SchemaMismatch,
)

# Tables upstream tend to print rounded probabilities, so exact-sum
# validation would reject otherwise valid rows.
PROB_SUM_TOL = 1e-4

O_INDEX = 0

STRONG = "strong"
WEAK = "weak"


@dataclass(frozen=True)
class ClassSchema:
    """BIO class layout for E entity types: K = 2E + 1 classes.

    Index 0 is always O; entity j owns B at index 1 + 2j and I at
    index 2 + 2j. An empty entity name yields the bare class names
    "B" / "I" used by single-entity corpora.
    """

    entity_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.entity_names) < 1:
            raise SchemaMismatch("schema needs at least one entity type")
        if len(set(self.entity_names)) != len(self.entity_names):
            raise SchemaMismatch(f"duplicate entity names: {self.entity_names}")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def K(self) -> int:
        return 2 * self.n_entities + 1

    @property
    def class_names(self) -> tuple[str, ...]:
        names = ["O"]
        for name in self.entity_names:
            suffix = f"-{name}" if name else ""
            names.append(f"B{suffix}")
            names.append(f"I{suffix}")
        return tuple(names)

    def b_index(self, entity: int) -> int:
        return 1 + 2 * entity

    def i_index(self, entity: int) -> int:
        return 2 + 2 * entity

    def entity_of_class(self, k: int) -> int:
        if k <= 0 or k >= self.K:
            raise SchemaMismatch(f"class {k} has no entity (K={self.K})")
        return (k - 1) // 2

    def is_b(self, k: int) -> bool:
        return k > 0 and k % 2 == 1

    def is_i(self, k: int) -> bool:
        return k > 0 and k % 2 == 0

    @classmethod
    def from_class_names(cls, names: Iterable[str]) -> "ClassSchema":
        names = list(names)
        if len(names) < 3 or len(names) % 2 == 0:
            raise SchemaMismatch(f"class list must have odd length >= 3, got {len(names)}")
        if names[0] != "O":
            raise SchemaMismatch(f"class 0 must be 'O', got {names[0]!r}")
        entities = []
        for j in range((len(names) - 1) // 2):
            b, i = names[1 + 2 * j], names[2 + 2 * j]
            b_ent = b[2:] if b.startswith("B-") else ("" if b == "B" else None)
            i_ent = i[2:] if i.startswith("I-") else ("" if i == "I" else None)
            if b_ent is None or i_ent is None or b_ent != i_ent:
                raise SchemaMismatch(f"classes {b!r}/{i!r} are not a B/I pair")
            entities.append(b_ent)
        return cls(tuple(entities))


@dataclass(frozen=True, eq=False)
class TokenPrediction:
    """One token with its K-class probability vector.

    `word_id` groups sub-word tokens into words; None means the token
    is its own word.
    """

    text: str
    position: int
    probs: np.ndarray
    word_id: int | None = None


@dataclass(frozen=True, eq=False)
class Chunk:
    """An ordered token sequence with a (T, K) probability matrix.

    Immutable after construction; the probability matrix is marked
    read-only so chunks can be shared across threads.
    """

    id: str
    schema: ClassSchema
    texts: tuple[str, ...]
    probs: np.ndarray
    word_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise SchemaMismatch(f"chunk {self.id!r}: probs must be 2-D, got {probs.ndim}-D")
        if probs.shape[0] != len(self.texts) or probs.shape[0] < 1:
            raise SchemaMismatch(
                f"chunk {self.id!r}: {len(self.texts)} tokens vs {probs.shape[0]} prob rows"
            )
        if self.word_ids is not None and len(self.word_ids) != len(self.texts):
            raise SchemaMismatch(f"chunk {self.id!r}: word_ids length mismatch")
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def n_tokens(self) -> int:
        return len(self.texts)

    def token(self, position: int) -> TokenPrediction:
        word_id = self.word_ids[position] if self.word_ids is not None else None
        return TokenPrediction(self.texts[position], position, self.probs[position], word_id)

    def argmax_classes(self) -> np.ndarray:
        """Per-token argmax class; ties resolve to the lowest class index."""
        return np.argmax(self.probs, axis=1)

    @classmethod
    def from_tokens(
        cls, chunk_id: str, schema: ClassSchema, tokens: Iterable[TokenPrediction]
    ) -> "Chunk":
        tokens = list(tokens)
        for i, tok in enumerate(tokens):
            if tok.position != i:
                raise SchemaMismatch(
                    f"chunk {chunk_id!r}: token {i} carries position {tok.position}"
                )
        texts = tuple(t.text for t in tokens)
        probs = np.array([np.asarray(t.probs, dtype=np.float64) for t in tokens])
        word_ids = None
        if any(t.word_id is not None for t in tokens):
            word_ids = tuple(t.word_id if t.word_id is not None else i for i, t in enumerate(tokens))
        return cls(chunk_id, schema, texts, probs, word_ids)


@dataclass(frozen=True)
class EntitySpan:
    """A decoded B/I token run: the prediction unit classified strong/weak.

    `anchor` is the position the span was opened at (the B token, or the
    promoted orphan I token).
    """

    chunk_id: str
    entity_type: str
    start: int
    end: int
    anchor: int
    text: str

    def __post_init__(self):
        if not (self.start <= self.anchor <= self.end):
            raise SchemaMismatch(
                f"span anchor {self.anchor} outside [{self.start}, {self.end}]"
            )

    @property
    def positions(self) -> range:
        return range(self.start, self.end + 1)

    def match_key(self) -> tuple[str, str, int, int]:
        return (self.chunk_id, self.entity_type, self.start, self.end)


@dataclass(frozen=True)
class CorpusRecord:
    """One corpus line: a chunk plus optional supervision."""

    chunk: Chunk
    label: str | None = None
    gold_spans: tuple[EntitySpan, ...] = ()


def validate_chunk(chunk: Chunk) -> Chunk:
    """Check every token's probability vector; return the chunk unchanged.

    Raises ProbabilityOutOfRange or ProbabilitySumViolation naming the
    offending token position.
    """
    probs = chunk.probs
    if probs.shape[1] != chunk.schema.K:
        raise SchemaMismatch(
            f"chunk {chunk.id!r}: {probs.shape[1]} classes vs schema K={chunk.schema.K}"
        )
    if probs.min() < 0.0 or probs.max() > 1.0:
        t, k = np.argwhere((probs < 0.0) | (probs > 1.0))[0]
        raise ProbabilityOutOfRange(chunk.id, int(t), float(probs[t, k]))
    sums = probs.sum(axis=1)
    deviation = np.abs(sums - 1.0)
    if deviation.max() > PROB_SUM_TOL:
        t = int(np.argmax(deviation))
        raise ProbabilitySumViolation(chunk.id, t, float(sums[t]))
    return chunk


def decode_spans(chunk: Chunk, orphan_policy: str = "promote") -> list[EntitySpan]:
    """Decode argmax BIO tags into entity spans, left to right.

    A B token opens a span; following I tokens of the same entity extend
    it. An I token with no live span of its entity is an orphan:
    ``promote`` (default) opens a new span there, ``ignore`` skips it.
    Output spans are non-overlapping and sorted by start.
    """
    if orphan_policy not in ("promote", "ignore"):
        raise ValueError(f"unknown orphan policy {orphan_policy!r}")
    schema = chunk.schema
    tags = chunk.argmax_classes()
    spans: list[EntitySpan] = []
    t = 0
    T = chunk.n_tokens
    while t < T:
        k = int(tags[t])
        if k == O_INDEX or (schema.is_i(k) and orphan_policy == "ignore"):
            t += 1
            continue
        entity = schema.entity_of_class(k)
        start = anchor = t
        t += 1
        i_class = schema.i_index(entity)
        while t < T and int(tags[t]) == i_class:
            t += 1
        spans.append(
            EntitySpan(
                chunk_id=chunk.id,
                entity_type=schema.entity_names[entity],
                start=start,
                end=t - 1,
                anchor=anchor,
                text=" ".join(chunk.texts[start:t]),
            )
        )
    return spans


def retag_spans(chunk_len: int, schema: ClassSchema, spans: Iterable[EntitySpan]) -> np.ndarray:
    """Rebuild an argmax tag sequence from spans over an O background."""
    tags = np.zeros(chunk_len, dtype=np.int64)
    for span in spans:
        entity = schema.entity_names.index(span.entity_type)
        tags[span.start] = schema.b_index(entity)
        tags[span.start + 1 : span.end + 1] = schema.i_index(entity)
    return tags


# ---------------------------------------------------------------------------
# JSON Lines corpus format
#
# One record per line:
#   {"id": str, "classes": [str, ...],
#    "tokens": [{"text": str, "probs": [float, ...], "word_id": int?}, ...],
#    "label": "strong"|"weak"?, "gold_spans": [{"entity_type", "start", "end"}]?}
# Unknown fields are ignored.
# ---------------------------------------------------------------------------


def parse_record(obj: dict, line_no: int = 0, path: str | None = None) -> CorpusRecord:
    """Build a CorpusRecord from one decoded JSON object."""

    def fail(msg: str):
        raise ParseError(line_no, msg, path)

    if not isinstance(obj, dict):
        fail(f"record must be an object, got {type(obj).__name__}")
    try:
        chunk_id = str(obj["id"])
        schema = ClassSchema.from_class_names(obj["classes"])
        raw_tokens = obj["tokens"]
    except KeyError as exc:
        fail(f"missing field {exc.args[0]!r}")
    except SchemaMismatch as exc:
        fail(str(exc))
    if not raw_tokens:
        fail("record has no tokens")

    texts = []
    word_ids = []
    rows = []
    has_word_ids = False
    for i, tok in enumerate(raw_tokens):
        try:
            texts.append(str(tok["text"]))
            row = tok["probs"]
        except (KeyError, TypeError):
            fail(f"token {i} missing 'text' or 'probs'")
        if len(row) != schema.K:
            fail(f"token {i} has {len(row)} probabilities, schema K={schema.K}")
        rows.append(row)
        wid = tok.get("word_id")
        has_word_ids = has_word_ids or wid is not None
        word_ids.append(wid if wid is not None else i)
    probs = np.array(rows, dtype=np.float64)

    chunk = Chunk(
        chunk_id,
        schema,
        tuple(texts),
        probs,
        tuple(word_ids) if has_word_ids else None,
    )

    label = obj.get("label")
    if label is not None and label not in (STRONG, WEAK):
        fail(f"label must be 'strong' or 'weak', got {label!r}")

    gold = []
    for g in obj.get("gold_spans") or ():
        try:
            start, end = int(g["start"]), int(g["end"])
            entity_type = str(g["entity_type"])
        except (KeyError, TypeError, ValueError):
            fail("gold span needs integer 'start'/'end' and 'entity_type'")
        if not (0 <= start <= end < chunk.n_tokens):
            fail(f"gold span [{start}, {end}] outside chunk of {chunk.n_tokens} tokens")
        gold.append(
            EntitySpan(
                chunk_id=chunk_id,
                entity_type=entity_type,
                start=start,
                end=end,
                anchor=start,
                text=" ".join(texts[start : end + 1]),
            )
        )
    return CorpusRecord(chunk, label, tuple(gold))


def record_to_obj(record: CorpusRecord) -> dict:
    """Inverse of parse_record, suitable for json.dumps."""
    chunk = record.chunk
    tokens = []
    for i in range(chunk.n_tokens):
        tok: dict = {"text": chunk.texts[i], "probs": [float(p) for p in chunk.probs[i]]}
        if chunk.word_ids is not None:
            tok["word_id"] = chunk.word_ids[i]
        tokens.append(tok)
    obj: dict = {"id": chunk.id, "classes": list(chunk.schema.class_names), "tokens": tokens}
    if record.label is not None:
        obj["label"] = record.label
    if record.gold_spans:
        obj["gold_spans"] = [
            {"entity_type": g.entity_type, "start": g.start, "end": g.end}
            for g in record.gold_spans
        ]
    return obj


def iter_records(source: str | IO[str], validate: bool = True) -> Iterator[CorpusRecord]:
    """Stream CorpusRecords from a JSONL path or open text handle.

    Reads one line at a time; memory stays bounded by the largest record.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            yield from iter_records(handle, validate=validate)
        return
    path = getattr(source, "name", None)
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}", path) from exc
        record = parse_record(obj, line_no, path)
        obj = None  # drop the raw dict before yielding; it dominates the working set
        if validate:
            validate_chunk(record.chunk)
        yield record
        del record  # keep nothing of the consumed record while reading the next line


def write_records(target: str | IO[str], records: Iterable[CorpusRecord]) -> int:
    """Write records as JSONL; returns the number written."""
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as handle:
            return write_records(handle, records)
    n = 0
    for record in records:
        target.write(json.dumps(record_to_obj(record)) + "\n")
        n += 1
    return n


def span_to_obj(span: EntitySpan) -> dict:
    return {
        "chunk_id": span.chunk_id,
        "entity_type": span.entity_type,
        "start": span.start,
        "end": span.end,
        "anchor": span.anchor,
        "text": span.text,
    }


def span_from_obj(obj: dict) -> EntitySpan:
    return EntitySpan(
        chunk_id=str(obj["chunk_id"]),
        entity_type=str(obj["entity_type"]),
        start=int(obj["start"]),
        end=int(obj["end"]),
        anchor=int(obj.get("anchor", obj["start"])),
        text=str(obj.get("text", "")),
    )
