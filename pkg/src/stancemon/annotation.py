"""Annotation management: balanced sampling, rating collapse, agreement.

Raw ratings live on a 1-5 scale plus Ambiguous and collapse to four stance
classes. Records append to a durable log; the latest record per
(sentence, annotator) supersedes earlier ones, keeping a full audit trail.
"""

from __future__ import annotations

import csv
import json
import os
import random
from collections import Counter
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ValidationError

RAW_RATINGS = ("1", "2", "3", "4", "5", "Ambiguous")
STANCE_LABELS = ("Against", "Neutral", "Supportive", "Ambiguous")
STANCE_CLASSES = ("Against", "Neutral", "Supportive")

ANNOTATION_CSV_HEADER = [
    "sentence_id", "annotator_id", "raw_rating", "label", "created_at", "guideline_version",
]


def normalize_raw_rating(value) -> str:
    text = str(value).strip()
    if text.lower() == "ambiguous":
        return "Ambiguous"
    if text in ("1", "2", "3", "4", "5"):
        return text
    raise ValidationError(f"invalid raw rating: {value!r}")


def collapse_rating(raw) -> str:
    """Collapse a 1-5/Ambiguous rating to Against/Neutral/Supportive/Ambiguous."""
    raw = normalize_raw_rating(raw)
    if raw in ("1", "2"):
        return "Against"
    if raw == "3":
        return "Neutral"
    if raw in ("4", "5"):
        return "Supportive"
    return "Ambiguous"


@dataclass(frozen=True)
class AnnotationRecord:
    sentence_id: str
    annotator_id: str
    raw: str
    label: str
    created_at: str
    guideline_version: str = "v1"

    def __post_init__(self):
        raw = normalize_raw_rating(self.raw)
        object.__setattr__(self, "raw", raw)
        expected = collapse_rating(raw)
        if self.label != expected:
            raise ValidationError(
                f"label {self.label!r} does not match collapse({raw!r})={expected!r}"
            )


def make_record(
    sentence_id: str,
    annotator_id: str,
    raw,
    guideline_version: str = "v1",
    created_at: Optional[str] = None,
) -> AnnotationRecord:
    raw = normalize_raw_rating(raw)
    return AnnotationRecord(
        sentence_id=sentence_id,
        annotator_id=annotator_id,
        raw=raw,
        label=collapse_rating(raw),
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
        guideline_version=guideline_version,
    )


@dataclass(frozen=True)
class AnnotationBatch:
    id: str
    sentence_ids: tuple[str, ...]
    annotators: tuple[str, ...]
    overlap: bool = False

    def __post_init__(self):
        if self.overlap and len(self.annotators) < 2:
            raise ValidationError("overlap batches need at least 2 annotators")


@dataclass(frozen=True)
class SamplingUnit:
    """One topical sentence as seen by the annotation sampler."""
    sentence_id: str
    publisher: str
    groups: tuple[str, ...]
    flagged: bool = False

    @property
    def primary_group(self) -> str:
        return self.groups[0]


def sample_for_annotation(
    units: Iterable[SamplingUnit], n: int, seed: int, batch_id: str = "sample"
) -> AnnotationBatch:
    """Draw n sentences balanced by publisher and keyword-group prevalence.

    Publishers receive equal shares; within a publisher, groups receive
    shares proportional to their prevalence among eligible sentences.
    Rounding residue goes to the largest remainders. A sentence counts
    toward its first matched group only.
    """
    eligible = [u for u in units if not u.flagged and u.groups]
    if n == 0:
        return AnnotationBatch(id=batch_id, sentence_ids=(), annotators=())
    if len(eligible) < n:
        raise ValidationError(f"only {len(eligible)} eligible sentences for n={n}")

    publishers = sorted({u.publisher for u in eligible})
    pub_share = _largest_remainder(
        n, {p: 1 for p in publishers}, order=publishers
    )
    chosen: list[str] = []
    rng = random.Random(seed)
    for publisher in publishers:
        share = pub_share[publisher]
        if share == 0:
            continue
        pool = [u for u in eligible if u.publisher == publisher]
        prevalence = Counter(u.primary_group for u in pool)
        if not prevalence:
            raise ValidationError(f"no eligible sentences in cell ({publisher}, *)")
        groups = sorted(prevalence)
        quotas = _largest_remainder(share, dict(prevalence), order=groups)
        for group in groups:
            quota = quotas[group]
            members = sorted(u.sentence_id for u in pool if u.primary_group == group)
            if quota > len(members):
                raise ValidationError(
                    f"cell ({publisher}, {group}) has {len(members)} sentences, needs {quota}"
                )
            chosen.extend(rng.sample(members, quota))
    return AnnotationBatch(id=batch_id, sentence_ids=tuple(chosen), annotators=())


def _largest_remainder(total: int, weights: Mapping[str, int], order: Sequence[str]) -> dict[str, int]:
    weight_sum = sum(weights[k] for k in order)
    if weight_sum == 0:
        raise ValidationError("cannot allocate over zero total weight")
    exact = {k: total * weights[k] / weight_sum for k in order}
    alloc = {k: int(exact[k]) for k in order}
    residue = total - sum(alloc.values())
    by_remainder = sorted(order, key=lambda k: (-(exact[k] - alloc[k]), -weights[k], k))
    for k in by_remainder[:residue]:
        alloc[k] += 1
    return alloc


def assign_batches(
    sentence_ids: Sequence[str],
    annotators: Sequence[str],
    overlap_n: int = 0,
    seed: int = 0,
    mode: str = "disjoint",
) -> list[AnnotationBatch]:
    """Split a sample across annotators, optionally carving out a
    double-annotated overlap batch for agreement estimation."""
    if mode not in ("disjoint", "interleaved"):
        raise ValidationError(f"unknown assignment mode: {mode!r}")
    if overlap_n > len(sentence_ids):
        raise ValidationError("overlap larger than the sample")
    if not annotators:
        raise ValidationError("no annotators given")
    rng = random.Random(seed)
    ids = list(sentence_ids)
    overlap_ids = sorted(rng.sample(ids, overlap_n)) if overlap_n else []
    rest = [s for s in ids if s not in set(overlap_ids)]
    batches = []
    if mode == "disjoint":
        size = len(rest) // len(annotators)
        extra = len(rest) % len(annotators)
        pos = 0
        for i, annotator in enumerate(annotators):
            take = size + (1 if i < extra else 0)
            batches.append(AnnotationBatch(
                id=f"batch-{annotator}",
                sentence_ids=tuple(rest[pos:pos + take]),
                annotators=(annotator,),
            ))
            pos += take
    else:
        per = {a: [] for a in annotators}
        for i, sid in enumerate(rest):
            per[annotators[i % len(annotators)]].append(sid)
        for annotator in annotators:
            batches.append(AnnotationBatch(
                id=f"batch-{annotator}",
                sentence_ids=tuple(per[annotator]),
                annotators=(annotator,),
            ))
    if overlap_ids:
        batches.append(AnnotationBatch(
            id="batch-overlap",
            sentence_ids=tuple(overlap_ids),
            annotators=tuple(annotators),
            overlap=True,
        ))
    return batches


def cohen_kappa(labels_a: Sequence, labels_b: Sequence, merge: Optional[Mapping] = None) -> float:
    """Chance-corrected agreement between two equal-length label lists.

    An optional merge map collapses labels before computing, which covers
    the coarser agreement variants (e.g. folding Ambiguous into Neutral).
    """
    if len(labels_a) != len(labels_b):
        raise ValidationError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    if not labels_a:
        raise ValidationError("empty label lists")
    if merge is not None:
        labels_a = [merge.get(l, l) for l in labels_a]
        labels_b = [merge.get(l, l) for l in labels_b]
    n = len(labels_a)
    if all(a == b for a, b in zip(labels_a, labels_b)):
        return 1.0
    observed = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    marg_a = Counter(labels_a)
    marg_b = Counter(labels_b)
    expected = sum(
        (marg_a[l] / n) * (marg_b[l] / n) for l in set(marg_a) | set(marg_b)
    )
    return (observed - expected) / (1.0 - expected)


MERGE_AMBIGUOUS_INTO_NEUTRAL = {"Ambiguous": "Neutral"}


def kappa_variants(raw_a: Sequence, raw_b: Sequence) -> dict[str, dict]:
    """Agreement under the standard label granularities, from raw ratings.

    Variants: six raw categories; four collapsed classes; three classes with
    Ambiguous merged into Neutral; three classes restricted to pairs where
    neither side said Ambiguous; two extreme classes only.
    """
    raw_a = [normalize_raw_rating(r) for r in raw_a]
    raw_b = [normalize_raw_rating(r) for r in raw_b]
    col_a = [collapse_rating(r) for r in raw_a]
    col_b = [collapse_rating(r) for r in raw_b]

    def restricted(keep) -> tuple[list, list]:
        pairs = [(a, b) for a, b in zip(col_a, col_b) if keep(a) and keep(b)]
        return [p[0] for p in pairs], [p[1] for p in pairs]

    out = {}
    out["six_category"] = {"n": len(raw_a), "kappa": cohen_kappa(raw_a, raw_b)}
    out["four_category"] = {"n": len(col_a), "kappa": cohen_kappa(col_a, col_b)}
    out["three_merged_neutral"] = {
        "n": len(col_a),
        "kappa": cohen_kappa(col_a, col_b, merge=MERGE_AMBIGUOUS_INTO_NEUTRAL),
    }
    a3, b3 = restricted(lambda l: l != "Ambiguous")
    out["three_agreed"] = {
        "n": len(a3), "kappa": cohen_kappa(a3, b3) if a3 else None,
    }
    a2, b2 = restricted(lambda l: l in ("Against", "Supportive"))
    out["two_category"] = {
        "n": len(a2), "kappa": cohen_kappa(a2, b2) if a2 else None,
    }
    return out


class AnnotationStore:
    """Append-only annotation log; the last record per (sentence, annotator)
    is live. Appends are fsynced before returning so an acknowledged
    submission survives a crash."""

    def __init__(self, data_dir: Path | str):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "annotations.log.jsonl"

    def append(self, record: AnnotationRecord) -> AnnotationRecord:
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        return record

    def history(self) -> list[AnnotationRecord]:
        if not self.log_path.exists():
            return []
        records = []
        with self.log_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(AnnotationRecord(**json.loads(line)))
        return records

    def live_records(self) -> dict[tuple[str, str], AnnotationRecord]:
        live = {}
        for rec in self.history():
            live[(rec.sentence_id, rec.annotator_id)] = rec
        return live

    def annotated_by(self, annotator_id: str) -> set[str]:
        return {sid for (sid, ann) in self.live_records() if ann == annotator_id}


def class_totals(records: Iterable[AnnotationRecord]) -> tuple[dict[str, int], int]:
    counts = Counter(rec.label for rec in records)
    totals = {label: counts.get(label, 0) for label in STANCE_LABELS}
    return totals, sum(totals.values())


def export_annotations(records: Iterable[AnnotationRecord], fh) -> int:
    writer = csv.writer(fh)
    writer.writerow(ANNOTATION_CSV_HEADER)
    count = 0
    for rec in records:
        writer.writerow([
            rec.sentence_id, rec.annotator_id, rec.raw, rec.label,
            rec.created_at, rec.guideline_version,
        ])
        count += 1
    return count


def import_annotations(fh) -> tuple[list[AnnotationRecord], list[tuple[int, str]]]:
    """Read interchange CSV; returns (records, per-row rejects)."""
    reader = csv.DictReader(fh)
    missing = [c for c in ANNOTATION_CSV_HEADER if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"annotation CSV is missing columns: {', '.join(missing)}")
    records, rejects = [], []
    for row_no, row in enumerate(reader, start=2):
        try:
            records.append(AnnotationRecord(
                sentence_id=row["sentence_id"],
                annotator_id=row["annotator_id"],
                raw=row["raw_rating"],
                label=row["label"],
                created_at=row["created_at"],
                guideline_version=row["guideline_version"],
            ))
        except (ValidationError, KeyError) as exc:
            rejects.append((row_no, str(exc)))
    return records, rejects
