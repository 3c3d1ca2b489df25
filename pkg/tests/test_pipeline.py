import io
import json
import os

import pytest

from nrfilter import (
    PipelineConfig,
    STRONG,
    SynthConfig,
    WEAK,
    iter_generate,
    load_model,
    run_pipeline,
    stream_classify,
    write_records,
)
from nrfilter.core import EntitySpan, parse_record
from nrfilter.errors import InvalidConfig
from nrfilter.pipeline import assign_validation, bounded_parallel_map, span_is_tp


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("corpus") / "synth.jsonl")
    write_records(path, iter_generate(SynthConfig(n_strong=300, n_weak=300, seed=41)))
    return path


@pytest.fixture(scope="module")
def pipeline_run(corpus_path, tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("run"))
    result = run_pipeline(corpus_path, out_dir, PipelineConfig())
    return result, out_dir


class TestRunPipeline:
    def test_validation_drops_meet_targets(self, pipeline_run):
        result, _ = pipeline_run
        val = result.report["validation"]
        assert val["tp_drop_pct"] <= 6.0
        assert val["fp_drop_pct"] >= 50.0

    def test_artifacts_written(self, pipeline_run):
        result, out_dir = pipeline_run
        for key in ("features", "model", "predictions", "report"):
            assert os.path.exists(result.paths[key])
        model = load_model(result.paths["model"])
        assert model.decision_threshold == result.tune.threshold

    def test_predictions_keep_dropped_spans_with_paths(self, pipeline_run):
        result, _ = pipeline_run
        verdicts = {STRONG: 0, WEAK: 0}
        with open(result.paths["predictions"], "r", encoding="utf-8") as handle:
            for line in handle:
                obj = json.loads(line)
                verdicts[obj["verdict"]] += 1
                assert obj["path"].startswith("(")
                assert 0.0 <= obj["p_weak"] <= 1.0
        assert verdicts[WEAK] > 0 and verdicts[STRONG] > 0
        assert verdicts[STRONG] + verdicts[WEAK] == result.report["n_spans"]

    def test_rerun_is_byte_identical(self, corpus_path, pipeline_run, tmp_path):
        _, first_dir = pipeline_run
        second_dir = str(tmp_path / "again")
        run_pipeline(corpus_path, second_dir, PipelineConfig())
        for name in ("features.csv", "model.json", "predictions.jsonl", "report.json"):
            with open(os.path.join(first_dir, name), "rb") as a:
                first = a.read()
            with open(os.path.join(second_dir, name), "rb") as b:
                second = b.read()
            assert first == second, name

    def test_entity_f1_improves(self, pipeline_run):
        result, _ = pipeline_run
        block = result.report["entity_f1_validation"]
        base = block["base"]["totals"]
        filtered = block["filtered"]["totals"]
        assert filtered["precision"] > base["precision"]
        assert filtered["f1"] >= base["f1"]

    def test_unlabeled_corpus_rejected(self, tmp_path):
        record = parse_record({
            "id": "x", "classes": ["O", "B", "I"],
            "tokens": [{"text": "a", "probs": [0.0, 1.0, 0.0]}],
        })
        path = str(tmp_path / "nolabel.jsonl")
        write_records(path, [record])
        with pytest.raises(InvalidConfig):
            run_pipeline(path, str(tmp_path / "out"), PipelineConfig())


class TestStreamClassify:
    def test_counts_and_order(self, corpus_path, pipeline_run):
        result, _ = pipeline_run
        out = io.StringIO()
        counts = stream_classify(corpus_path, result.model, out, PipelineConfig())
        lines = out.getvalue().strip().split("\n")
        assert counts[STRONG] + counts[WEAK] == len(lines)
        ids = [json.loads(line)["chunk_id"] for line in lines]
        assert ids == sorted(ids, key=lambda s: int(s.split("-")[1]))

    def test_threads_preserve_order(self, corpus_path, pipeline_run):
        result, _ = pipeline_run
        sequential, threaded = io.StringIO(), io.StringIO()
        stream_classify(corpus_path, result.model, sequential, PipelineConfig())
        stream_classify(
            corpus_path, result.model, threaded,
            PipelineConfig(threads=4),
        )
        assert sequential.getvalue() == threaded.getvalue()

    def test_schema_guard(self, corpus_path, pipeline_run):
        result, _ = pipeline_run
        with pytest.raises(InvalidConfig):
            stream_classify(
                corpus_path, result.model, io.StringIO(),
                PipelineConfig(bins=5),
            )

    def test_no_path_flag(self, corpus_path, pipeline_run):
        result, _ = pipeline_run
        out = io.StringIO()
        stream_classify(corpus_path, result.model, out, PipelineConfig(),
                        include_path=False)
        first = json.loads(out.getvalue().split("\n", 1)[0])
        assert "path" not in first and "verdict" in first


class TestHelpers:
    def test_bounded_parallel_map_order(self):
        items = list(range(500))
        got = list(bounded_parallel_map(lambda x: x * x, iter(items), threads=8))
        assert got == [x * x for x in items]

    def test_bounded_parallel_map_lazy(self):
        consumed = []

        def source():
            for i in range(10_000):
                consumed.append(i)
                yield i

        stream = bounded_parallel_map(lambda x: x, source(), threads=2)
        next(stream), next(stream)
        assert len(consumed) < 100  # far from drained

    def test_assign_validation_deterministic(self):
        a = [assign_validation(3, i, 0.2) for i in range(1000)]
        b = [assign_validation(3, i, 0.2) for i in range(1000)]
        assert a == b
        assert 100 < sum(a) < 300

    def test_span_is_tp_prefers_gold(self):
        record = parse_record({
            "id": "g", "classes": ["O", "B", "I"],
            "tokens": [{"text": "a", "probs": [0.0, 1.0, 0.0]},
                        {"text": "b", "probs": [1.0, 0.0, 0.0]}],
            "label": "weak",
            "gold_spans": [{"entity_type": "", "start": 0, "end": 0}],
        })
        span = EntitySpan("g", "", 0, 0, 0, "a")
        assert span_is_tp(record, span)  # gold match wins over the weak label
        other = EntitySpan("g", "", 1, 1, 1, "b")
        assert not span_is_tp(record, other)

    def test_span_is_tp_requires_supervision(self):
        record = parse_record({
            "id": "u", "classes": ["O", "B", "I"],
            "tokens": [{"text": "a", "probs": [0.0, 1.0, 0.0]}],
        })
        with pytest.raises(InvalidConfig):
            span_is_tp(record, EntitySpan("u", "", 0, 0, 0, "a"))


class TestPipelineConfigFile:
    def test_roundtrip(self, tmp_path):
        config = PipelineConfig(decay_rate=2.0, bins=8, threads=2)
        path = str(tmp_path / "config.json")
        config.to_file(path)
        assert PipelineConfig.from_file(path) == config

    def test_unknown_field_rejected(self):
        with pytest.raises(InvalidConfig):
            PipelineConfig.from_obj({"decay": 1.0})

    def test_validation_fraction_bounds(self):
        with pytest.raises(InvalidConfig):
            PipelineConfig(validation_fraction=0.0)
