#!/usr/bin/env python3
"""Smoke test for the traceoracle Python extension.

Builds the cdylib if needed, imports it from this directory, and runs a
miniature generate -> train -> classify -> evaluate -> save/load -> baseline
pipeline, asserting on each stage.
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent
MODULE = HERE / "traceoracle.so"


def build_extension():
    """Compiles the extension and drops traceoracle.so next to this script."""
    subprocess.run(
        ["cargo", "build", "-p", "trace-oracle-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "debug" / "libtraceoracle.so"
    shutil.copy2(built, MODULE)


def main():
    if not MODULE.exists():
        build_extension()
    sys.path.insert(0, str(HERE))
    import traceoracle

    names = traceoracle.subjects()
    assert "fsm-proto" in names, names
    print(f"subjects: {', '.join(names)}")

    corpus = traceoracle.generate("fsm-proto", inputs=40, seed=11)
    assert len(corpus) == 80, len(corpus)
    labels = corpus.labels()
    assert labels.count("pass") == 40 and labels.count("fail") == 40, labels
    assert corpus.subjects() == ["fsm-proto"]
    print(f"generated: {corpus!r}")

    model, report = traceoracle.train(
        corpus, fraction=0.2, seed=3, batch=8, epochs=2
    )
    assert report["train_size"] == 16 and report["test_size"] == 64, report
    assert report["tp"] + report["fp"] + report["tn"] + report["fn"] == 64, report
    assert len(report["loss"]) == report["epochs"] == 2, report
    print(f"trained: {model!r} loss={report['loss'][-1]:.4f}")

    rows = model.classify(corpus)
    assert len(rows) == 80, len(rows)
    assert all(0.0 <= p <= 1.0 for _, p, _ in rows)
    assert all(v in ("pass", "fail") for _, _, v in rows)

    scored = model.evaluate(corpus)
    assert scored["tp"] + scored["fp"] + scored["tn"] + scored["fn"] == 80, scored

    with tempfile.TemporaryDirectory() as tmp:
        cp_path = str(Path(tmp) / "model.json")
        model.save(cp_path)
        reloaded = traceoracle.Model.load(cp_path)
        assert reloaded.seed == model.seed
        assert reloaded.classify(corpus) == rows, "reload changes verdicts"

        corpus_path = str(Path(tmp) / "traces.jsonl")
        corpus.save(corpus_path)
        corpus2 = traceoracle.Corpus.load(corpus_path)
        assert corpus2.trace_ids() == corpus.trace_ids()

    grid, best = traceoracle.baseline(corpus)
    assert len(grid) == 15, len(grid)
    assert 0 <= best < 15
    assert {r["linkage"] for r in grid} == {"single", "average", "complete"}
    print(
        f"baseline best: linkage={grid[best]['linkage']} "
        f"fraction={grid[best]['fraction']} f1={grid[best]['f1']}"
    )

    print("OK")


if __name__ == "__main__":
    main()
