"""Shared orchestration: extraction runs, dataset joins and file layouts.

The CLI and the HTTP service both drive the pipeline through these
helpers so their behavior stays identical.
"""

from __future__ import annotations

import csv
import json
from datetime import date
from pathlib import Path
from typing import Iterable, Optional

from .annotation import AnnotationRecord, SamplingUnit, STANCE_CLASSES
from .classify import LabeledExample, Prediction
from .config import PipelineConfig
from .corpus import ArticleStore, segment_sentences
from .errors import ValidationError
from .lexicon import Lexicon, compile_lexicon
from .trends import StanceObservation

LABELED_CSV_HEADER = ["sentence_id", "text", "label"]


def load_lexicon(config: PipelineConfig) -> Lexicon:
    return compile_lexicon(config.lexicon_path)


def extract_corpus(config: PipelineConfig, lexicon: Optional[Lexicon] = None) -> dict[str, int]:
    """Segment every stored article and tag topical sentences.

    Writes sentences.jsonl (all sentences, with article metadata) and
    hits.jsonl (one row per group hit) under the extract directory.
    """
    lexicon = lexicon or load_lexicon(config)
    store = ArticleStore(config.corpus_dir)
    config.extract_dir.mkdir(parents=True, exist_ok=True)
    n_sentences = n_topical = n_hits = 0
    sent_tmp = config.sentences_path.with_suffix(".tmp")
    hits_tmp = config.hits_path.with_suffix(".tmp")
    with sent_tmp.open("w", encoding="utf-8") as sents_fh, \
            hits_tmp.open("w", encoding="utf-8") as hits_fh:
        for article in store.iter_all():
            day = article.published_date().isoformat()
            for sentence in segment_sentences(article):
                hits = lexicon.match_sentence(sentence)
                row = {
                    "sentence_id": sentence.sentence_id,
                    "article_id": article.id,
                    "index": sentence.index,
                    "text": sentence.text,
                    "span": list(sentence.span),
                    "flagged": sentence.flagged,
                    "publisher": article.publisher,
                    "date": day,
                    "groups": [h.group for h in hits],
                }
                sents_fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
                n_sentences += 1
                if hits:
                    n_topical += 1
                for hit in hits:
                    hits_fh.write(json.dumps({
                        "sentence_id": hit.sentence_id,
                        "group": hit.group,
                        "matches": [list(m) for m in hit.matches],
                    }, ensure_ascii=False, sort_keys=True) + "\n")
                    n_hits += 1
    sent_tmp.rename(config.sentences_path)
    hits_tmp.rename(config.hits_path)
    return {"sentences": n_sentences, "topical": n_topical, "hits": n_hits}


def iter_sentence_rows(config: PipelineConfig) -> Iterable[dict]:
    if not config.sentences_path.exists():
        raise ValidationError(f"no extraction output at {config.sentences_path}; run extract first")
    with config.sentences_path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def sentence_meta(config: PipelineConfig) -> dict[str, tuple[str, date, tuple[str, ...]]]:
    return {
        row["sentence_id"]: (
            row["publisher"], date.fromisoformat(row["date"]), tuple(row["groups"]),
        )
        for row in iter_sentence_rows(config)
    }


def sentence_texts(config: PipelineConfig, topical_only: bool = True) -> list[tuple[str, str]]:
    return [
        (row["sentence_id"], row["text"])
        for row in iter_sentence_rows(config)
        if row["groups"] or not topical_only
    ]


def sampling_units(config: PipelineConfig) -> list[SamplingUnit]:
    return [
        SamplingUnit(
            sentence_id=row["sentence_id"],
            publisher=row["publisher"],
            groups=tuple(row["groups"]),
            flagged=row["flagged"],
        )
        for row in iter_sentence_rows(config)
        if row["groups"]
    ]


def article_topicality(config: PipelineConfig) -> list[tuple[str, date, bool]]:
    """(publisher, date, has at least one topical sentence) per article."""
    store = ArticleStore(config.corpus_dir)
    topical_articles = {
        row["article_id"] for row in iter_sentence_rows(config) if row["groups"]
    }
    out = []
    for article in store.iter_all():
        out.append((article.publisher, article.published_date(), article.id in topical_articles))
    return out


def build_observations(
    config: PipelineConfig, predictions: Iterable[Prediction]
) -> list[StanceObservation]:
    from .trends import join_predictions
    return join_predictions(predictions, sentence_meta(config))


def write_labeled_csv(rows: Iterable[tuple[str, str, str]], fh) -> int:
    writer = csv.writer(fh)
    writer.writerow(LABELED_CSV_HEADER)
    count = 0
    for sentence_id, text, label in rows:
        writer.writerow([sentence_id, text, label])
        count += 1
    return count


def load_labeled_csv(path: Path | str) -> tuple[list[LabeledExample], int]:
    """Read a (sentence_id, text, label) dataset for training/evaluation.

    Ambiguous rows are counted and skipped (they never enter training or
    eval sets); any other label outside the three classes is an error.
    """
    examples: list[LabeledExample] = []
    ambiguous = 0
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        text_col = "text" if "text" in fields else ("sentence" if "sentence" in fields else None)
        label_col = "label" if "label" in fields else ("stance" if "stance" in fields else None)
        if text_col is None or label_col is None:
            raise ValidationError(f"labeled CSV needs text and label columns, has {fields}")
        for i, row in enumerate(reader):
            label = (row[label_col] or "").strip()
            if label == "Ambiguous":
                ambiguous += 1
                continue
            if label not in STANCE_CLASSES:
                raise ValidationError(f"row {i + 2}: unknown label {label!r}")
            sid = (row.get("sentence_id") or f"row-{i}").strip()
            examples.append(LabeledExample(sentence_id=sid, text=row[text_col], label=label))
    return examples, ambiguous


def labeled_rows_from_records(
    records: Iterable[AnnotationRecord],
    texts: dict[str, str],
    include_ambiguous: bool = False,
) -> list[tuple[str, str, str]]:
    """Join live annotation records with sentence texts for dataset export."""
    rows = []
    for rec in records:
        if rec.label == "Ambiguous" and not include_ambiguous:
            continue
        text = texts.get(rec.sentence_id)
        if text is None:
            continue
        rows.append((rec.sentence_id, text, rec.label))
    return rows
