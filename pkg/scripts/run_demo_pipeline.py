#!/usr/bin/env python3
"""End-to-end demo: fixture corpus -> extraction -> NB -> trends CSVs.

Runs the whole desk-scale pipeline twice with one seed and checks the
trend outputs are byte-identical, then prints the cross-validation report.

Usage:
    python scripts/run_demo_pipeline.py --root demo-run
"""

import argparse
import sys
from pathlib import Path

from stancemon import classify, evaluate, pipeline
from stancemon.cli import main as cli
from stancemon.fixtures import build_fixture, write_article_csv, write_labeled_csv


def run_once(root: Path) -> dict[str, bytes]:
    root.mkdir(parents=True, exist_ok=True)
    articles, labeled = build_fixture(n_articles=30, seed=7)
    write_article_csv(root / "articles.csv", articles)
    write_labeled_csv(root / "labels.csv", labeled)
    data_dir = root / "data"
    steps = [
        ["ingest", "--data-dir", str(data_dir), "--input", str(root / "articles.csv"),
         "--format", "csv", "--publisher", "MainstreamGroup"],
        ["extract", "--data-dir", str(data_dir)],
        ["train-nb", "--data-dir", str(data_dir), "--labels", str(root / "labels.csv"),
         "--out", str(root / "nb.json")],
        ["classify", "--data-dir", str(data_dir), "--backend", "nb",
         "--model", str(root / "nb.json"), "--out", str(root / "preds.csv")],
        ["trends", "--data-dir", str(data_dir), "--predictions", str(root / "preds.csv"),
         "--plot-data", "--out", str(root / "trends")],
    ]
    for step in steps:
        code = cli(step)
        if code != 0:
            raise SystemExit(f"step {step[0]} failed with exit code {code}")
    return {p.name: p.read_bytes() for p in sorted((root / "trends").glob("*.csv"))}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="demo-run")
    args = parser.parse_args()
    root = Path(args.root)

    first = run_once(root / "run1")
    second = run_once(root / "run2")
    diffs = [name for name in first if first[name] != second.get(name)]
    print(f"trend CSVs: {len(first)}; byte-identical across runs: {not diffs}")
    if diffs:
        print(f"  differing files: {diffs}")
        return 1

    examples, _ = pipeline.load_labeled_csv(root / "run1" / "labels.csv")
    result = evaluate.cross_validate(lambda: classify.NBBackend(), examples, k=3, seed=42)
    print("NB cross-validation on the synthetic fixture labels (not the released benchmark):")
    for cls, m in result.mean.per_class.items():
        print(f"  {cls:12s} f1={m['f1']:.3f} precision={m['precision']:.3f} "
              f"recall={m['recall']:.3f}")
    print(f"  macro f1 {result.mean.macro['f1']:.3f} ± {result.std['macro_f1']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
