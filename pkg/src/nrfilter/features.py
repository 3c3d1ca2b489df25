"""Span-level feature vectors: density map cells plus statistical summaries.

Feature names follow one grammar so trained models and exported decision
paths stay machine-readable:

    <Scope|PDM>_<tag>_<statistic>[_bkt_<lo>-<hi>]

Scope is one of Token, Word, Phrase, Neighbor, Context; tags are
"B-tag"/"I-tag"/"O-tag" (entity-qualified as "B-<name>-tag" when the
schema has several entity types). Density cells use the PDM prefix; the
legacy SPD prefix is accepted on input as an alias.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import IO, Iterable, Iterator

import numpy as np

from .core import Chunk, ClassSchema, EntitySpan
from .errors import InvalidConfig, SchemaMismatch
from .pdm import DecayConfig, bin_edges, compute_pdm

SCOPE_TOKEN = "Token"
SCOPE_WORD = "Word"
SCOPE_PHRASE = "Phrase"
SCOPE_NEIGHBOR = "Neighbor"
SCOPE_CONTEXT = "Context"
SCOPE_ORDER = (SCOPE_TOKEN, SCOPE_WORD, SCOPE_PHRASE, SCOPE_NEIGHBOR, SCOPE_CONTEXT)

_CLASS_STATS = ("count", "ratio", "max_prob", "mean_prob", "cov_prob")
_SCOPE_STATS = (
    "prob_diff_mean",
    "prob_diff_max",
    "prob_class_ratio_2_by_1",
    "prob_class_ratio_3_by_2",
    "mean_entropy",
    "size",
)


@dataclass(frozen=True)
class SpanScope:
    """A named subset of chunk token positions."""

    kind: str
    positions: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class FeatureConfig:
    """Knobs that fix the feature schema."""

    decay: DecayConfig = DecayConfig()
    neighbor_window: int = 1
    scopes: tuple[str, ...] = SCOPE_ORDER

    def __post_init__(self):
        if self.neighbor_window < 0:
            raise InvalidConfig(f"neighbor window must be >= 0, got {self.neighbor_window}")
        unknown = [s for s in self.scopes if s not in SCOPE_ORDER]
        if unknown:
            raise InvalidConfig(f"unknown scopes: {unknown}")


def canonical_feature_name(name: str) -> str:
    """Map the legacy SPD_ density prefix onto PDM_."""
    return "PDM_" + name[4:] if name.startswith("SPD_") else name


def class_tags(schema: ClassSchema) -> tuple[str, ...]:
    """Per-class tag strings in schema index order (O first)."""
    qualify = schema.n_entities > 1
    tags = ["O-tag"]
    for name in schema.entity_names:
        suffix = f"-{name}" if qualify and name else ""
        tags.append(f"B{suffix}-tag")
        tags.append(f"I{suffix}-tag")
    return tuple(tags)


def _edge_decimals(bins: int) -> int:
    for d in range(1, 7):
        if all(abs(round(i / bins, d) - i / bins) < 1e-12 for i in range(bins + 1)):
            return d
    return 6


def bin_labels(bins: int) -> tuple[str, ...]:
    d = _edge_decimals(bins)
    return tuple(f"{lo:.{d}f}-{hi:.{d}f}" for lo, hi in bin_edges(bins))


class FeatureSchema:
    """Ordered, immutable feature-name layout for one configuration.

    The name sequence is a pure function of (class schema, config), so
    every span featurized under the same configuration produces vectors
    with an identical key order.
    """

    def __init__(self, class_schema: ClassSchema, config: FeatureConfig):
        self.class_schema = class_schema
        self.config = config
        self.tags = class_tags(class_schema)
        names: list[str] = []
        for tag in self.tags:
            for label in bin_labels(config.decay.bins):
                names.append(f"PDM_{tag}_WCount_bkt_{label}")
        for scope in config.scopes:
            for tag in self.tags:
                for stat in _CLASS_STATS:
                    names.append(f"{scope}_{tag}_{stat}")
            for stat in _SCOPE_STATS:
                names.append(f"{scope}_{stat}")
        self.names: tuple[str, ...] = tuple(names)
        self.index: dict[str, int] = {n: i for i, n in enumerate(names)}

    def __len__(self) -> int:
        return len(self.names)

    def position(self, name: str) -> int:
        key = canonical_feature_name(name)
        if key not in self.index:
            raise SchemaMismatch(f"unknown feature {name!r}")
        return self.index[key]


@lru_cache(maxsize=64)
def _cached_schema(entity_names: tuple[str, ...], config: FeatureConfig) -> FeatureSchema:
    return FeatureSchema(ClassSchema(entity_names), config)


def build_feature_schema(
    class_schema: ClassSchema, config: FeatureConfig = FeatureConfig()
) -> FeatureSchema:
    return _cached_schema(class_schema.entity_names, config)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Values aligned to a shared FeatureSchema."""

    schema: FeatureSchema
    values: np.ndarray

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.schema.position(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.schema.names, self.values)}


def build_scopes(
    chunk: Chunk, span: EntitySpan, neighbor_window: int = 1
) -> dict[str, SpanScope]:
    """The five operand scopes for one predicted span.

    Token <= Word <= Phrase by construction; Neighbor takes up to
    ``neighbor_window`` tokens on each side of the phrase; Context is
    everything outside the phrase.
    """
    T = chunk.n_tokens
    phrase = tuple(span.positions)
    if chunk.word_ids is not None:
        anchor_word = chunk.word_ids[span.anchor]
        word = tuple(t for t in phrase if chunk.word_ids[t] == anchor_word)
    else:
        word = (span.anchor,)
    before = range(max(0, span.start - neighbor_window), span.start)
    after = range(span.end + 1, min(T, span.end + 1 + neighbor_window))
    in_phrase = set(phrase)
    context = tuple(t for t in range(T) if t not in in_phrase)
    return {
        SCOPE_TOKEN: SpanScope(SCOPE_TOKEN, (span.anchor,)),
        SCOPE_WORD: SpanScope(SCOPE_WORD, word),
        SCOPE_PHRASE: SpanScope(SCOPE_PHRASE, phrase),
        SCOPE_NEIGHBOR: SpanScope(SCOPE_NEIGHBOR, tuple(before) + tuple(after)),
        SCOPE_CONTEXT: SpanScope(SCOPE_CONTEXT, context),
    }


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy (natural log) of one probability vector; 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def max_probability(chunk: Chunk, scope: SpanScope, class_index: int) -> float:
    """Max probability of one class over a scope; 0 for an empty scope."""
    if scope.size == 0:
        return 0.0
    return float(chunk.probs[list(scope.positions), class_index].max())


class _ChunkStats:
    """Per-token quantities shared by every scope of one chunk."""

    def __init__(self, chunk: Chunk):
        probs = chunk.probs
        self.argmax = chunk.argmax_classes()
        ordered = np.sort(probs, axis=1)
        self.top1 = ordered[:, -1]
        self.top2 = ordered[:, -2]
        self.top3 = ordered[:, -3]
        # p * log(max(p, tiny)) is exactly 0 at p = 0, so 0 log 0 := 0 holds.
        self.entropies = -(probs * np.log(np.maximum(probs, 1e-300))).sum(axis=1)


def _scope_block(chunk: Chunk, scope: SpanScope, stats: _ChunkStats) -> np.ndarray:
    """Statistical block for one scope in canonical order: per class
    (count, ratio, max, mean, CoV), then the six scope-level statistics.
    Empty scopes yield all zeros, with the trailing size making emptiness
    visible to the tree."""
    K = chunk.schema.K
    out = np.zeros(5 * K + 6, dtype=np.float64)
    if scope.size == 0:
        return out
    idx = np.asarray(scope.positions, dtype=np.int64)
    sub = chunk.probs[idx]
    n = scope.size
    size = float(n)

    counts = np.bincount(stats.argmax[idx], minlength=K).astype(np.float64)
    sums = sub.sum(axis=0)
    meanp = sums / n
    var = np.maximum((sub * sub).sum(axis=0) / n - meanp * meanp, 0.0)
    block = np.empty((K, 5), dtype=np.float64)
    block[:, 0] = counts
    block[:, 1] = counts / size
    block[:, 2] = sub.max(axis=0)
    block[:, 3] = meanp
    # Population CoV; a zero mean implies an all-zero column, so CoV = 0.
    block[:, 4] = np.divide(
        np.sqrt(var), meanp, out=np.zeros(K, dtype=np.float64), where=meanp > 0
    )
    out[: 5 * K] = block.ravel()

    top1, top2, top3 = stats.top1[idx], stats.top2[idx], stats.top3[idx]
    diff = top1 - top2
    base = 5 * K
    out[base] = diff.sum() / n
    out[base + 1] = diff.max()
    # top1 >= 1/K > 0 always; top2 can be 0 (one-hot rows), guard that one.
    out[base + 2] = (top2 / top1).sum() / n
    out[base + 3] = (
        np.divide(top3, top2, out=np.zeros(n, dtype=np.float64), where=top2 > 0).sum() / n
    )
    out[base + 4] = stats.entropies[idx].sum() / n
    out[base + 5] = size
    return out


def scope_feature_names(class_schema: ClassSchema, kind: str) -> tuple[str, ...]:
    names = []
    for tag in class_tags(class_schema):
        for stat in _CLASS_STATS:
            names.append(f"{kind}_{tag}_{stat}")
    for stat in _SCOPE_STATS:
        names.append(f"{kind}_{stat}")
    return tuple(names)


def statistical_features(chunk: Chunk, scope: SpanScope) -> dict[str, float]:
    """Statistical feature block for one scope, keyed by canonical name."""
    block = _scope_block(chunk, scope, _ChunkStats(chunk))
    names = scope_feature_names(chunk.schema, scope.kind)
    return {name: float(value) for name, value in zip(names, block)}


def assemble_features(
    chunk: Chunk,
    span: EntitySpan,
    config: FeatureConfig = FeatureConfig(),
    schema: FeatureSchema | None = None,
) -> FeatureVector:
    """Full feature vector for one span: density cells then all scopes."""
    if schema is None:
        schema = build_feature_schema(chunk.schema, config)
    pdm = compute_pdm(chunk, span.anchor, config.decay, exclude=span.positions)
    values = np.empty(len(schema), dtype=np.float64)
    # Density block: class-major, bins ascending -- matches schema layout.
    n_bins = config.decay.bins
    K = chunk.schema.K
    values[: n_bins * K] = pdm.values.T.ravel()
    pos = n_bins * K
    stats = _ChunkStats(chunk)
    scopes = build_scopes(chunk, span, config.neighbor_window)
    step = 5 * K + 6
    for kind in config.scopes:
        values[pos : pos + step] = _scope_block(chunk, scopes[kind], stats)
        pos += step
    if pos != len(schema):
        raise SchemaMismatch(f"assembled {pos} features, schema expects {len(schema)}")
    if not np.all(np.isfinite(values)):
        bad = schema.names[int(np.argmin(np.isfinite(values)))]
        raise ValueError(f"non-finite feature value for {bad!r}")
    return FeatureVector(schema, values)


# ---------------------------------------------------------------------------
# Feature matrix export / import
# ---------------------------------------------------------------------------

_META_COLS = ("chunk_id", "entity_type", "start", "end", "anchor", "label")


def write_feature_csv(
    target: str | IO[str],
    rows: Iterable[tuple[EntitySpan, str | None, FeatureVector]],
) -> int:
    """Stream feature rows to CSV; header = meta columns + canonical names."""
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            return write_feature_csv(handle, rows)
    writer = csv.writer(target)
    n = 0
    header_schema: FeatureSchema | None = None
    for span, label, fv in rows:
        if header_schema is None:
            header_schema = fv.schema
            writer.writerow(list(_META_COLS) + list(fv.schema.names))
        elif fv.schema.names != header_schema.names:
            raise SchemaMismatch("feature rows use differing schemas")
        meta = [span.chunk_id, span.entity_type, span.start, span.end, span.anchor,
                label if label is not None else ""]
        writer.writerow(meta + [repr(float(v)) for v in fv.values])
        n += 1
    return n


@dataclass
class FeatureTable:
    """A materialized feature matrix with row metadata."""

    names: tuple[str, ...]
    matrix: np.ndarray
    labels: list[str | None]
    spans: list[EntitySpan]


def read_feature_csv(source: str | IO[str]) -> FeatureTable:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return read_feature_csv(handle)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or header[: len(_META_COLS)] != list(_META_COLS):
        raise SchemaMismatch("feature CSV header missing metadata columns")
    names = tuple(canonical_feature_name(n) for n in header[len(_META_COLS) :])
    rows, labels, spans = [], [], []
    for row in reader:
        if not row:
            continue
        chunk_id, entity_type, start, end, anchor, label = row[: len(_META_COLS)]
        spans.append(
            EntitySpan(chunk_id, entity_type, int(start), int(end), int(anchor), text="")
        )
        labels.append(label or None)
        rows.append([float(v) for v in row[len(_META_COLS) :]])
    matrix = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(names)))
    return FeatureTable(names, matrix, labels, spans)


def feature_row_obj(span: EntitySpan, label: str | None, fv: FeatureVector) -> dict:
    obj = {
        "chunk_id": span.chunk_id,
        "entity_type": span.entity_type,
        "start": span.start,
        "end": span.end,
        "anchor": span.anchor,
        "features": fv.as_dict(),
    }
    if label is not None:
        obj["label"] = label
    return obj


def iter_feature_rows_jsonl(source: str | IO[str]) -> Iterator[tuple[EntitySpan, str | None, dict]]:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            yield from iter_feature_rows_jsonl(handle)
        return
    for line in source:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        span = EntitySpan(
            obj["chunk_id"], obj["entity_type"], int(obj["start"]), int(obj["end"]),
            int(obj["anchor"]), text=str(obj.get("text", "")),
        )
        features = {canonical_feature_name(k): float(v) for k, v in obj["features"].items()}
        yield span, obj.get("label"), features
