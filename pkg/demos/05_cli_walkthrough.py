# The same pipeline, stage by stage, through the command-line interface.
#
# Every stage reads and writes plain files (JSON Lines for corpora and
# spans, CSV for features and metrics), so each step is inspectable and
# the whole chain is scriptable.
#
# Run: python demos/05_cli_walkthrough.py

import json
import subprocess
import sys
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp(prefix="nrfilter-demo-"))
print("working directory:", root)


def cli(*args):
    cmd = [sys.executable, "-m", "nrfilter", *map(str, args)]
    print("\n$", " ".join(cmd[2:]))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout.rstrip() or proc.stderr.rstrip())
    assert proc.returncode == 0, proc.stderr
    return proc


corpus = root / "corpus.jsonl"
cli("synth", "--out", corpus, "--n-strong", 400, "--n-weak", 400, "--seed", 5)
cli("validate", "--input", corpus)
cli("decode", "--input", corpus, "--out", root / "base_spans.jsonl")
cli("featurize", "--input", corpus, "--out", root / "features.csv")
cli("train", "--features", root / "features.csv", "--model", root / "model.json")
cli("tune", "--model", root / "model.json", "--features", root / "features.csv",
    "--max-tp-drop", 0.06)
cli("classify", "--input", corpus, "--model", root / "model.json",
    "--out", root / "verdicts.jsonl")
cli("evaluate", "--pred", root / "verdicts.jsonl", "--gold", corpus,
    "--base", root / "base_spans.jsonl", "--out", root / "report.json")
cli("baseline", "--method", "softmax", "--input", corpus,
    "--grid", "0.9,0.99,0.999", "--out", root / "softmax.csv")

# or all stages at once, with a fresh split and its own artifacts:
cli("pipeline", "--corpus", corpus, "--out-dir", root / "run")

# one record explained, straight from the corpus
one = root / "one.jsonl"
one.write_text(corpus.read_text().splitlines()[1] + "\n")
cli("explain", "--model", root / "run" / "model.json", "--record", one)

report = json.loads((root / "run" / "report.json").read_text())
print("\npipeline validation report:", json.dumps(report["validation"], indent=2))
