"""Batch command-line interface over the filtering pipeline.

Subcommands: validate, decode, featurize, synth, train, tune, classify,
explain, evaluate, baseline, pipeline. Every error class maps to its own
exit code so shell pipelines can tell what went wrong. NRF_LOG sets the
log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import __version__
from .core import (
    STRONG,
    WEAK,
    decode_spans,
    iter_records,
    span_from_obj,
    span_to_obj,
    write_records,
)
from .errors import (
    InvalidConfig,
    NonPositiveDecayRate,
    NonPositiveTemperature,
    NrFilterError,
    ParseError,
    ProbabilityOutOfRange,
    ProbabilitySumViolation,
    SchemaMismatch,
)
from .baselines import baseline_grid
from .features import (
    assemble_features,
    build_feature_schema,
    feature_row_obj,
    read_feature_csv,
    write_feature_csv,
)
from .metrics import drop_rates, entity_f1, format_drop_table
from .pdm import compute_pdm, grid_to_obj
from .pipeline import PipelineConfig, run_pipeline, span_is_tp, stream_classify
from .synth import SynthConfig, iter_generate
from .tree import (
    TrainConfig,
    explain as explain_instance,
    load_model,
    save_model,
    train_matrix,
    tune_threshold,
)

log = logging.getLogger("nrfilter")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_VALIDATION = 5
EXIT_SCHEMA = 6
EXIT_CONFIG = 7
EXIT_DOMAIN = 8


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    config = (
        PipelineConfig.from_file(args.config)
        if getattr(args, "config", None)
        else PipelineConfig()
    )
    overrides = {}
    for attr, key in (
        ("decay_rate", "decay_rate"),
        ("bins", "bins"),
        ("neighbor_window", "neighbor_window"),
        ("threads", "threads"),
        ("seed", "seed"),
        ("validation_fraction", "validation_fraction"),
        ("orphan_policy", "orphan_policy"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if overrides or getattr(args, "max_tp_drop", None) is not None:
        obj = config.to_obj()
        obj.update(overrides)
        if getattr(args, "max_tp_drop", None) is not None:
            obj["tree"]["max_tp_drop"] = args.max_tp_drop
        config = PipelineConfig.from_obj(obj)
    return config


def _add_feature_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="pipeline config JSON file")
    sub.add_argument("--decay-rate", dest="decay_rate", type=float, default=None,
                     help="Gaussian decay rate (default 1.0)")
    sub.add_argument("--bins", type=int, default=None, help="density bins (default 10)")
    sub.add_argument("--neighbor-window", dest="neighbor_window", type=int, default=None,
                     help="neighbor tokens per side (default 1)")
    sub.add_argument("--orphan-policy", dest="orphan_policy",
                     choices=["promote", "ignore"], default=None)


def cmd_validate(args) -> int:
    n = 0
    for _ in iter_records(args.input):
        n += 1
    print(f"ok: {n} records")
    return EXIT_OK


def cmd_decode(args) -> int:
    config = _pipeline_config(args)
    n = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for record in iter_records(args.input):
            for span in decode_spans(record.chunk, config.orphan_policy):
                out.write(json.dumps(span_to_obj(span)) + "\n")
                n += 1
    print(f"decoded {n} spans -> {args.out}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    config = _pipeline_config(args)
    fconfig = config.feature_config
    dump = open(args.dump_pdm, "w", encoding="utf-8") if args.dump_pdm else None

    def rows():
        for record in iter_records(args.input):
            chunk = record.chunk
            schema = build_feature_schema(chunk.schema, fconfig)
            for span in decode_spans(chunk, config.orphan_policy):
                fv = assemble_features(chunk, span, fconfig, schema)
                if dump is not None:
                    pdm = compute_pdm(chunk, span.anchor, fconfig.decay,
                                      exclude=span.positions)
                    obj = {"chunk_id": chunk.id, **grid_to_obj(pdm)}
                    dump.write(json.dumps(obj) + "\n")
                yield span, record.label, fv

    try:
        if args.format == "csv":
            n = write_feature_csv(args.out, rows())
        else:
            n = 0
            with open(args.out, "w", encoding="utf-8") as out:
                for span, label, fv in rows():
                    out.write(json.dumps(feature_row_obj(span, label, fv)) + "\n")
                    n += 1
    finally:
        if dump is not None:
            dump.close()
    print(f"featurized {n} spans -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    kwargs = {}
    if args.synth_config:
        with open(args.synth_config, "r", encoding="utf-8") as handle:
            kwargs.update(json.load(handle))
    for key in ("n_strong", "n_weak", "min_tokens", "max_tokens", "pull_strength",
                "noise_sigma", "label_flip_rate", "seed"):
        value = getattr(args, key)
        if value is not None:
            kwargs[key] = value
    config = SynthConfig(**kwargs)
    n = write_records(args.out, iter_generate(config))
    print(f"generated {n} records -> {args.out}")
    return EXIT_OK


def _read_training_table(features_path: str, labels_path: str | None):
    table = read_feature_csv(features_path)
    if labels_path:
        with open(labels_path, "r", encoding="utf-8") as handle:
            labels = [line.strip() for line in handle if line.strip()]
        if len(labels) != table.matrix.shape[0]:
            raise SchemaMismatch(
                f"{len(labels)} labels for {table.matrix.shape[0]} feature rows"
            )
    else:
        labels = [label or "" for label in table.labels]
        if any(not label for label in labels):
            raise InvalidConfig(
                "feature CSV has rows without labels; pass --labels"
            )
    return table, labels


def cmd_train(args) -> int:
    table, labels = _read_training_table(args.features, args.labels)
    tconfig = TrainConfig(
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        min_impurity_decrease=args.min_impurity_decrease,
        max_tp_drop=args.max_tp_drop if args.max_tp_drop is not None else 0.06,
        class_weighted=not args.no_class_weights,
        seed=args.seed if args.seed is not None else 0,
    )
    model = train_matrix(table.matrix, labels, table.names, tconfig)
    save_model(model, args.model)
    leaves = len(model.leaves)
    print(f"trained tree: {len(model.nodes)} nodes, {leaves} leaves -> {args.model}")
    return EXIT_OK


def cmd_tune(args) -> int:
    model = load_model(args.model)
    table, labels = _read_training_table(args.features, args.labels)
    rows = [(table.matrix[i], labels[i] == STRONG) for i in range(len(labels))]
    result = tune_threshold(model, rows, args.max_tp_drop)
    save_model(model.with_threshold(result.threshold), args.model)
    print(
        f"threshold {result.threshold!r}: tp_drop {100 * result.tp_drop:.2f}% "
        f"fp_drop {100 * result.fp_drop:.2f}% "
        f"({result.n_tp} TP / {result.n_fp} FP) -> {args.model}"
    )
    return EXIT_OK


def cmd_classify(args) -> int:
    config = _pipeline_config(args)
    model = load_model(args.model)
    if args.threshold is not None:
        model = model.with_threshold(args.threshold)
    with open(args.out, "w", encoding="utf-8") as out:
        counts = stream_classify(
            args.input, model, out, config, include_path=not args.no_path
        )
    print(
        f"classified {counts[STRONG] + counts[WEAK]} spans "
        f"({counts[STRONG]} strong / {counts[WEAK]} weak) -> {args.out}"
    )
    return EXIT_OK


def cmd_explain(args) -> int:
    config = _pipeline_config(args)
    fconfig = config.feature_config
    model = load_model(args.model)
    records = list(iter_records(args.record))
    if not records:
        raise InvalidConfig(f"no records in {args.record}")
    shown = 0
    for record in records:
        chunk = record.chunk
        schema = build_feature_schema(chunk.schema, fconfig)
        spans = decode_spans(chunk, config.orphan_policy)
        for i, span in enumerate(spans):
            if args.span_index is not None and i != args.span_index:
                continue
            fv = assemble_features(chunk, span, fconfig, schema)
            path = explain_instance(model, fv)
            print(f"chunk {chunk.id} span [{span.start}, {span.end}] "
                  f"{span.text!r} -> {path.verdict} (p_weak={path.p_weak!r})")
            print("Decision Path:")
            print(path.serialize())
            print()
            shown += 1
    if shown == 0:
        raise InvalidConfig("no span matched --span-index")
    return EXIT_OK


def _load_spans(path: str, keep_only: bool):
    spans = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if keep_only and obj.get("verdict") == WEAK:
                continue
            spans.append(span_from_obj(obj))
    return spans


def cmd_evaluate(args) -> int:
    gold = []
    chunk_ids = []
    for record in iter_records(args.gold):
        chunk_ids.append(record.chunk.id)
        gold.extend(record.gold_spans)
    base_spans = _load_spans(args.base, keep_only=False)
    pred_spans = _load_spans(args.pred, keep_only=True)
    base_report = entity_f1(base_spans, gold, chunk_ids)
    filt_report = entity_f1(pred_spans, gold, chunk_ids)

    table_rows = {}
    drops = {}
    for entity_type in sorted(set(base_report.per_type) | set(filt_report.per_type)):
        b = base_report.per_type.get(entity_type)
        f = filt_report.per_type.get(entity_type)
        if b is None:
            continue
        tp_drop, fp_drop = drop_rates(b, f) if f else (100.0, 100.0)
        drops[entity_type] = {"tp_drop_pct": tp_drop, "fp_drop_pct": fp_drop}
        table_rows[entity_type] = {"filtered": (tp_drop, fp_drop)}
    total_drops = drop_rates(base_report.totals, filt_report.totals)
    report = {
        "base": base_report.to_dict(),
        "filtered": filt_report.to_dict(),
        "drops": drops,
        "total_drops": {
            "tp_drop_pct": total_drops[0],
            "fp_drop_pct": total_drops[1],
        },
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(report, handle, indent=2, sort_keys=True)
            handle.write("\n")
    print(json.dumps(report["total_drops"], sort_keys=True))
    print(format_drop_table(table_rows))
    return EXIT_OK


def cmd_baseline(args) -> int:
    labeled = []
    for record in iter_records(args.input):
        for span in decode_spans(record.chunk):
            labeled.append((record.chunk, span, span_is_tp(record, span)))
    grid = [float(v) for v in args.grid.split(",")] if args.grid else [0.5, 0.9, 0.95]
    var_grid = (
        [float(v) for v in args.var_grid.split(",")] if args.var_grid else None
    )
    passes_by_chunk = None
    if args.passes:
        passes_by_chunk = {}
        for path in args.passes.split(","):
            for record in iter_records(path):
                passes_by_chunk.setdefault(record.chunk.id, []).append(record.chunk)
    rows = baseline_grid(args.method, labeled, grid, passes_by_chunk, var_grid)
    fields = ["method", "threshold", "temperature", "entropy_cutoff",
              "mc_mean_cutoff", "mc_var_cutoff", "tp_drop_pct", "fp_drop_pct",
              "precision", "recall", "f1"]
    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"{len(rows)} configurations -> {args.out}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = _pipeline_config(args)
    result = run_pipeline(args.corpus, args.out_dir, config)
    val = result.report["validation"]
    print(
        f"validation: tp_drop {val['tp_drop_pct']:.2f}% fp_drop {val['fp_drop_pct']:.2f}% "
        f"(threshold {result.tune.threshold!r})"
    )
    print(f"artifacts in {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrfilter",
        description="Filter weak NER predictions with density and uncertainty features.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("validate", help="check a JSONL corpus")
    p.add_argument("--input", required=True)
    p.set_defaults(fn=cmd_validate)

    p = subs.add_parser("decode", help="decode argmax tags into entity spans")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_feature_flags(p)
    p.set_defaults(fn=cmd_decode)

    p = subs.add_parser("featurize", help="emit per-span feature vectors")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--dump-pdm", dest="dump_pdm",
                   help="also dump raw density grids as JSONL (debug)")
    _add_feature_flags(p)
    p.set_defaults(fn=cmd_featurize)

    p = subs.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", dest="synth_config", help="SynthConfig JSON file")
    p.add_argument("--n-strong", dest="n_strong", type=int, default=None)
    p.add_argument("--n-weak", dest="n_weak", type=int, default=None)
    p.add_argument("--min-tokens", dest="min_tokens", type=int, default=None)
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    p.add_argument("--pull-strength", dest="pull_strength", type=float, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--label-flip-rate", dest="label_flip_rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = subs.add_parser("train", help="train the strong/weak tree from a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", help="optional label file, one strong/weak per row")
    p.add_argument("--model", required=True)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=12)
    p.add_argument("--min-samples-leaf", dest="min_samples_leaf", type=int, default=5)
    p.add_argument("--min-impurity-decrease", dest="min_impurity_decrease",
                   type=float, default=0.0)
    p.add_argument("--max-tp-drop", dest="max_tp_drop", type=float, default=None)
    p.add_argument("--no-class-weights", dest="no_class_weights", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("tune", help="pick the decision threshold on validation data")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", help="optional label file")
    p.add_argument("--max-tp-drop", dest="max_tp_drop", type=float, default=None)
    p.set_defaults(fn=cmd_tune)

    p = subs.add_parser("classify", help="stream verdicts for every decoded span")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--no-path", dest="no_path", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    _add_feature_flags(p)
    p.set_defaults(fn=cmd_classify)

    p = subs.add_parser("explain", help="print the decision path for a record's spans")
    p.add_argument("--model", required=True)
    p.add_argument("--record", required=True, help="JSONL file with the record(s)")
    p.add_argument("--span-index", dest="span_index", type=int, default=None)
    _add_feature_flags(p)
    p.set_defaults(fn=cmd_explain)

    p = subs.add_parser("evaluate", help="entity F1 and drop rates vs the base output")
    p.add_argument("--pred", required=True, help="classified spans JSONL")
    p.add_argument("--gold", required=True, help="corpus JSONL with gold_spans")
    p.add_argument("--base", required=True, help="unfiltered spans JSONL")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(fn=cmd_evaluate)

    p = subs.add_parser("baseline", help="grid-evaluate a reference filter")
    p.add_argument("--method", required=True,
                   choices=["softmax", "temp", "entropy", "mcdropout"])
    p.add_argument("--input", required=True, help="labeled corpus JSONL")
    p.add_argument("--grid", help="comma-separated parameter grid")
    p.add_argument("--var-grid", dest="var_grid",
                   help="variance cutoffs for mcdropout")
    p.add_argument("--passes", help="comma-separated pass files for mcdropout")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_baseline)

    p = subs.add_parser("pipeline", help="featurize, train, tune, classify, report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--max-tp-drop", dest="max_tp_drop", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--validation-fraction", dest="validation_fraction",
                   type=float, default=None)
    _add_feature_flags(p)
    p.set_defaults(fn=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("NRF_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ProbabilityOutOfRange, ProbabilitySumViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (InvalidConfig, NonPositiveDecayRate, NonPositiveTemperature) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NrFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"error: {exc}" + (f" ({name})" if name else ""), file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover
        log.exception("unexpected failure")
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


def entrypoint() -> None:
    sys.exit(main())
