#!/usr/bin/env python3
"""Build a ready-to-serve demo workspace from the synthetic fixture corpus.

Ingests the articles, extracts sentences, trains the NB baseline, samples
an annotation batch and writes a config file, so `stancemon serve` (or the
annotation UI) can run against it immediately.

Usage:
    python scripts/make_fixture.py --root demo [--n-articles 40] [--sample 25]
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from stancemon import annotation, classify, pipeline
from stancemon.config import PipelineConfig
from stancemon.corpus import ArticleStore, ingest_articles
from stancemon.fixtures import build_fixture, write_article_csv, write_labeled_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True)
    parser.add_argument("--n-articles", type=int, default=40)
    parser.add_argument("--sample", type=int, default=25)
    parser.add_argument("--annotators", default="ui-tester")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)
    config = PipelineConfig(data_dir=root / "data", seed=args.seed)

    articles, labeled = build_fixture(n_articles=args.n_articles, seed=args.seed)
    write_article_csv(root / "articles.csv", articles)
    write_labeled_csv(root / "labels.csv", labeled)

    store = ArticleStore(config.corpus_dir)
    with (root / "articles.csv").open("rb") as fh:
        report = ingest_articles(fh, "csv", "MainstreamGroup", store,
                                 publisher_registry=config.publishers)
    counts = pipeline.extract_corpus(config)

    examples, _ = pipeline.load_labeled_csv(root / "labels.csv")
    model = classify.nb_train(examples)
    (root / "nb_model.json").write_text(model.to_json() + "\n", encoding="utf-8")

    units = pipeline.sampling_units(config)
    n = min(args.sample, len(units))
    batch = annotation.sample_for_annotation(units, n=n, seed=args.seed)
    annotators = [a.strip() for a in args.annotators.split(",") if a.strip()]
    overlap = min(4, n // 3) if len(annotators) > 1 else 0
    batches = annotation.assign_batches(batch.sentence_ids, annotators,
                                        overlap_n=overlap, seed=args.seed)
    config.annotation_dir.mkdir(parents=True, exist_ok=True)
    with (config.annotation_dir / "batches.json").open("w", encoding="utf-8") as fh:
        json.dump([asdict(b) for b in batches], fh, ensure_ascii=False, indent=2)

    config_path = root / "stancemon.cfg"
    config_path.write_text(
        f'data_dir = "{config.data_dir}"\nseed = {args.seed}\n', encoding="utf-8")

    print(f"workspace ready at {root}")
    print(f"  articles ingested: {report.accepted}, sentences: {counts['sentences']}, "
          f"topical: {counts['topical']}")
    print(f"  annotation sample: {n} sentences for {annotators}")
    print(f"  serve with: stancemon serve --config {config_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
