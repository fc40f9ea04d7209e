#!/usr/bin/env python3
"""Naive Bayes cross-validation benchmark on the released annotated dataset.

Expects a CSV with text and label columns (Against/Neutral/Supportive;
Ambiguous rows are skipped). Prints the per-class and macro F1 report that
the acceptance suite checks against the published baseline.

Usage:
    python scripts/nb_released_benchmark.py --labels path/to/stance_annotations.csv
"""

import argparse
import sys
import time

from stancemon import evaluate, pipeline
from stancemon.classify import NBBackend


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--labels", required=True)
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--alpha", type=float, default=1.0)
    args = parser.parse_args()

    examples, ambiguous = pipeline.load_labeled_csv(args.labels)
    print(f"{len(examples)} usable examples ({ambiguous} ambiguous skipped)")
    started = time.perf_counter()
    result = evaluate.cross_validate(lambda: NBBackend(alpha=args.alpha),
                                     examples, k=args.k, seed=args.seed)
    elapsed = time.perf_counter() - started
    for cls, m in result.mean.per_class.items():
        print(f"{cls:12s} f1={m['f1']:.3f} precision={m['precision']:.3f} "
              f"recall={m['recall']:.3f}")
    print(f"macro f1 {result.mean.macro['f1']:.3f} ± {result.std['macro_f1']:.3f} "
          f"({elapsed:.1f}s, k={args.k})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
