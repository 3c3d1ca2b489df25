"""End-to-end orchestration: featurize, train, tune, classify, report.

The training pipeline materializes the feature matrix (training needs
it anyway); classification is a pure streaming pass that holds one
record at a time, so corpus size does not affect memory.
"""

from __future__ import annotations

import json
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Iterator, TypeVar

import numpy as np

from .core import (
    CorpusRecord,
    EntitySpan,
    STRONG,
    WEAK,
    decode_spans,
    iter_records,
    span_to_obj,
)
from .errors import InvalidConfig
from .features import (
    SCOPE_ORDER,
    FeatureConfig,
    FeatureVector,
    assemble_features,
    build_feature_schema,
    write_feature_csv,
)
from .metrics import EntityCounts, drop_rates, entity_f1
from .pdm import DecayConfig
from .tree import (
    TrainConfig,
    TreeModel,
    TuneResult,
    explain,
    serialize_model,
    train_matrix,
    tune_threshold,
)

T = TypeVar("T")
U = TypeVar("U")

# Kept sorted by method name so config files round-trip byte-stably.
DEFAULT_BASELINE_GRIDS = (
    ("entropy", (0.1, 0.5, 1.0)),
    ("softmax", (0.5, 0.9, 0.95, 0.99)),
    ("temp", (0.5, 1.0, 2.0, 4.0)),
)

_SPLIT_SALT = 104729


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the pipeline, serializable to one JSON file."""

    decay_rate: float = 1.0
    bins: int = 10
    neighbor_window: int = 1
    scopes: tuple[str, ...] = SCOPE_ORDER
    tree: TrainConfig = field(default_factory=TrainConfig)
    validation_fraction: float = 0.2
    orphan_policy: str = "promote"
    threads: int = 1
    seed: int = 0
    baseline_grids: tuple[tuple[str, tuple[float, ...]], ...] = DEFAULT_BASELINE_GRIDS

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidConfig(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        if self.threads < 1:
            raise InvalidConfig(f"threads must be >= 1, got {self.threads}")

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            decay=DecayConfig(self.decay_rate, self.bins),
            neighbor_window=self.neighbor_window,
            scopes=self.scopes,
        )

    def to_obj(self) -> dict:
        return {
            "decay_rate": self.decay_rate,
            "bins": self.bins,
            "neighbor_window": self.neighbor_window,
            "scopes": list(self.scopes),
            "tree": {
                "max_depth": self.tree.max_depth,
                "min_samples_leaf": self.tree.min_samples_leaf,
                "min_impurity_decrease": self.tree.min_impurity_decrease,
                "max_tp_drop": self.tree.max_tp_drop,
                "class_weighted": self.tree.class_weighted,
                "seed": self.tree.seed,
            },
            "validation_fraction": self.validation_fraction,
            "orphan_policy": self.orphan_policy,
            "threads": self.threads,
            "seed": self.seed,
            "baseline_grids": {m: list(g) for m, g in self.baseline_grids},
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "PipelineConfig":
        known = {
            "decay_rate", "bins", "neighbor_window", "scopes", "tree",
            "validation_fraction", "orphan_policy", "threads", "seed",
            "baseline_grids",
        }
        unknown = set(obj) - known
        if unknown:
            raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
        kwargs: dict = {k: v for k, v in obj.items() if k in known}
        if "scopes" in kwargs:
            kwargs["scopes"] = tuple(kwargs["scopes"])
        if "tree" in kwargs:
            kwargs["tree"] = TrainConfig(**kwargs["tree"])
        if "baseline_grids" in kwargs:
            kwargs["baseline_grids"] = tuple(
                (m, tuple(g)) for m, g in sorted(kwargs["baseline_grids"].items())
            )
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_obj(json.load(handle))

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_obj(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def bounded_parallel_map(
    fn: Callable[[T], U], items: Iterable[T], threads: int
) -> Iterator[U]:
    """Order-preserving map with a bounded number of in-flight tasks,
    so streaming inputs are not drained eagerly."""
    if threads <= 1:
        for item in items:
            result = fn(item)
            del item
            yield result
            del result
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending: deque = deque()
        it = iter(items)
        for item in it:
            pending.append(pool.submit(fn, item))
            if len(pending) >= threads * 4:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def span_is_tp(record: CorpusRecord, span: EntitySpan) -> bool:
    """Supervision for one span: exact gold match when gold spans exist,
    otherwise the record-level label."""
    if record.gold_spans:
        keys = {g.match_key() for g in record.gold_spans}
        return span.match_key() in keys
    if record.label is not None:
        return record.label == STRONG
    raise InvalidConfig(
        f"record {record.chunk.id!r} has neither label nor gold_spans"
    )


def assign_validation(seed: int, index: int, fraction: float) -> bool:
    """Deterministic per-record split assignment, independent of order."""
    return bool(np.random.default_rng([seed, _SPLIT_SALT, index]).random() < fraction)


@dataclass
class PipelineResult:
    report: dict
    model: TreeModel
    tune: TuneResult
    paths: dict[str, str]


def run_pipeline(
    corpus: str | IO[str],
    out_dir: str,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineResult:
    """Train, tune, classify, and evaluate over one labeled corpus.

    Writes features.csv, model.json, predictions.jsonl, and report.json
    under ``out_dir``; reruns with identical inputs produce byte-identical
    artifacts. The returned report carries validation drop rates.
    """
    fconfig = config.feature_config
    rows: list[tuple[EntitySpan, FeatureVector, str | None, bool, bool]] = []
    val_gold: list[EntitySpan] = []
    val_base: list[EntitySpan] = []
    any_gold = False
    n_records = 0
    for index, record in enumerate(iter_records(corpus)):
        n_records += 1
        chunk = record.chunk
        schema = build_feature_schema(chunk.schema, fconfig)
        is_val = assign_validation(config.seed, index, config.validation_fraction)
        any_gold = any_gold or bool(record.gold_spans)
        if is_val:
            val_gold.extend(record.gold_spans)
        for span in decode_spans(chunk, config.orphan_policy):
            fv = assemble_features(chunk, span, fconfig, schema)
            is_tp = span_is_tp(record, span)
            rows.append((span, fv, record.label, is_val, is_tp))
            if is_val:
                val_base.append(span)
    if not rows:
        raise InvalidConfig("corpus produced no predicted spans")

    train_rows = [(fv, WEAK if not is_tp else STRONG) for _, fv, _, is_val, is_tp in rows if not is_val]
    names = rows[0][1].schema.names
    X = np.vstack([fv.values for fv, _ in train_rows])
    model = train_matrix(X, [label for _, label in train_rows], names, config.tree)

    val_rows = [(fv, is_tp) for _, fv, _, is_val, is_tp in rows if is_val]
    tune = tune_threshold(model, val_rows, config.tree.max_tp_drop)
    model = model.with_threshold(tune.threshold)

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "features": os.path.join(out_dir, "features.csv"),
        "model": os.path.join(out_dir, "model.json"),
        "predictions": os.path.join(out_dir, "predictions.jsonl"),
        "report": os.path.join(out_dir, "report.json"),
    }

    write_feature_csv(
        paths["features"],
        ((span, WEAK if not is_tp else STRONG, fv) for span, fv, _, _, is_tp in rows),
    )
    with open(paths["model"], "w", encoding="utf-8") as handle:
        handle.write(serialize_model(model))
        handle.write("\n")

    splits = {"train": EntityCounts(), "validation": EntityCounts()}
    base = {"train": EntityCounts(), "validation": EntityCounts()}
    val_kept: list[EntitySpan] = []
    with open(paths["predictions"], "w", encoding="utf-8") as handle:
        for span, fv, _, is_val, is_tp in rows:
            path = explain(model, fv)
            split = "validation" if is_val else "train"
            kept = path.verdict == STRONG
            obj = span_to_obj(span)
            obj.update(
                verdict=path.verdict,
                p_weak=path.p_weak,
                split=split,
                path=path.serialize(),
            )
            handle.write(json.dumps(obj) + "\n")
            part, whole = splits[split], base[split]
            whole.tp += is_tp
            whole.fp += not is_tp
            if kept:
                part.tp += is_tp
                part.fp += not is_tp
            elif is_tp:
                part.fn += 1
            if is_val and kept:
                val_kept.append(span)

    report: dict = {
        "n_records": n_records,
        "n_spans": len(rows),
        "decision_threshold": tune.threshold,
        "config": config.to_obj(),
    }
    for split in ("train", "validation"):
        tp_drop, fp_drop = drop_rates(base[split], splits[split])
        report[split] = {
            "n_tp": base[split].tp,
            "n_fp": base[split].fp,
            "tp_drop_pct": tp_drop,
            "fp_drop_pct": fp_drop,
        }
    if any_gold:
        report["entity_f1_validation"] = {
            "base": entity_f1(val_base, val_gold).to_dict(),
            "filtered": entity_f1(val_kept, val_gold).to_dict(),
        }
    with open(paths["report"], "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return PipelineResult(report, model, tune, paths)


def stream_classify(
    corpus: str | IO[str],
    model: TreeModel,
    out: IO[str],
    config: PipelineConfig = PipelineConfig(),
    include_path: bool = True,
) -> dict[str, int]:
    """Classify every decoded span of a corpus, one record at a time.

    Dropped spans are kept in the output flagged "weak" so rejections
    stay reviewable. Returns verdict counts.
    """
    fconfig = config.feature_config
    counts = {STRONG: 0, WEAK: 0}

    def process(record: CorpusRecord) -> list[tuple[str, str]]:
        chunk = record.chunk
        schema = build_feature_schema(chunk.schema, fconfig)
        if schema.names != model.feature_names:
            raise InvalidConfig(
                "model was trained under a different feature schema than "
                "this corpus/configuration produces"
            )
        lines = []
        for span in decode_spans(chunk, config.orphan_policy):
            fv = assemble_features(chunk, span, fconfig, schema)
            path = explain(model, fv)
            obj = span_to_obj(span)
            obj.update(verdict=path.verdict, p_weak=path.p_weak)
            if include_path:
                obj["path"] = path.serialize()
            lines.append((path.verdict, json.dumps(obj)))
        return lines

    for lines in bounded_parallel_map(process, iter_records(corpus), config.threads):
        for verdict, line in lines:
            out.write(line + "\n")
            counts[verdict] += 1
    return counts
