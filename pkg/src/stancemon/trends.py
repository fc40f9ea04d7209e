"""Diachronic stance analytics: time-bucketed counts and shares.

Buckets are calendar months/years or ISO weeks. Empty buckets inside a
publisher's observed range are emitted with a flag, never interpolated,
so gaps in the source data stay visible. An optional certainty threshold
moves low-confidence predictions into an Uncertain bucket.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Mapping, Optional, Sequence

from .annotation import STANCE_CLASSES
from .classify import Prediction
from .errors import ValidationError

GRANULARITIES = ("week", "month", "year")
SHARE_TOLERANCE = 1e-9
DEFAULT_TAU = 0.70
STANCE_WITH_UNCERTAIN = (*STANCE_CLASSES, "Uncertain")


def bucket_key(day: date, granularity: str) -> str:
    if granularity == "month":
        return f"{day.year:04d}-{day.month:02d}"
    if granularity == "year":
        return f"{day.year:04d}"
    if granularity == "week":
        iso = day.isocalendar()
        return f"{iso[0]:04d}-W{iso[1]:02d}"
    raise ValidationError(f"unknown granularity: {granularity!r}")


def bucket_range(start: date, end: date, granularity: str) -> list[str]:
    """All bucket keys from start to end inclusive, with no holes."""
    if start > end:
        raise ValidationError("bucket range start after end")
    keys: list[str] = []
    if granularity == "month":
        y, m = start.year, start.month
        while (y, m) <= (end.year, end.month):
            keys.append(f"{y:04d}-{m:02d}")
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    elif granularity == "year":
        keys = [f"{y:04d}" for y in range(start.year, end.year + 1)]
    elif granularity == "week":
        day = start - timedelta(days=start.weekday())
        while day <= end:
            keys.append(bucket_key(day, "week"))
            day += timedelta(days=7)
    else:
        raise ValidationError(f"unknown granularity: {granularity!r}")
    return keys


def week_key_to_month(week_bucket: str) -> str:
    """Month containing the ISO week's Thursday (the week's anchor day)."""
    year, week = week_bucket.split("-W")
    thursday = date.fromisocalendar(int(year), int(week), 4)
    return f"{thursday.year:04d}-{thursday.month:02d}"


@dataclass(frozen=True)
class StanceObservation:
    """One classified topical sentence joined with its article metadata."""
    sentence_id: str
    publisher: str
    day: date
    label: str
    max_prob: float
    has_distribution: bool = True
    groups: tuple[str, ...] = ()


def join_predictions(
    predictions: Iterable[Prediction],
    sentence_meta: Mapping[str, tuple[str, date, tuple[str, ...]]],
) -> list[StanceObservation]:
    """Attach (publisher, date, keyword groups) metadata to predictions."""
    out = []
    for pred in predictions:
        meta = sentence_meta.get(pred.sentence_id)
        if meta is None:
            raise ValidationError(f"no metadata for sentence {pred.sentence_id!r}")
        publisher, day, groups = meta
        out.append(StanceObservation(
            sentence_id=pred.sentence_id,
            publisher=publisher,
            day=day,
            label=pred.label,
            max_prob=pred.max_prob,
            has_distribution=pred.has_distribution,
            groups=tuple(groups),
        ))
    return out


@dataclass(frozen=True)
class TrendPoint:
    bucket: str
    publisher: str
    counts: dict[str, int]
    total: int
    shares: dict[str, float]
    group: Optional[str] = None
    empty: bool = False

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValidationError("trend point counts do not sum to total")
        if self.total > 0:
            share_sum = sum(self.shares.values())
            if abs(share_sum - 1.0) > SHARE_TOLERANCE:
                raise ValidationError(f"shares sum to {share_sum}, not 1")
        elif any(self.shares.values()) or not self.empty:
            raise ValidationError("empty bucket must carry zero shares and the empty flag")


def _make_point(bucket: str, publisher: str, label_counts: Mapping[str, int],
                group: Optional[str] = None) -> TrendPoint:
    counts = {label: int(label_counts.get(label, 0)) for label in STANCE_WITH_UNCERTAIN}
    total = sum(counts.values())
    if total > 0:
        shares = {label: counts[label] / total for label in counts}
        return TrendPoint(bucket, publisher, counts, total, shares, group=group)
    return TrendPoint(bucket, publisher, counts, 0, {label: 0.0 for label in counts},
                      group=group, empty=True)


def _bucket_label(obs: StanceObservation, tau: Optional[float]) -> str:
    if tau is None:
        return obs.label
    return obs.label if obs.max_prob >= tau else "Uncertain"


def _validate_tau(tau: Optional[float], observations: Sequence[StanceObservation]) -> None:
    if tau is None:
        return
    if not (1.0 / 3.0 < tau <= 1.0):
        raise ValidationError(f"certainty threshold must be in (1/3, 1], got {tau}")
    offender = next((o for o in observations if not o.has_distribution), None)
    if offender is not None:
        raise ValidationError(
            "thresholding requires probability distributions; "
            f"sentence {offender.sentence_id!r} carries a distribution-free prediction"
        )


def stance_shares(
    observations: Sequence[StanceObservation],
    granularity: str,
    publisher: Optional[str] = None,
    tau: Optional[float] = None,
) -> list[TrendPoint]:
    """Per-bucket stance counts and shares for one or all publishers.

    With a threshold, predictions whose top probability falls below tau are
    bucketed as Uncertain; the boundary itself keeps the label.
    """
    _validate_tau(tau, observations)
    if publisher is not None:
        observations = [o for o in observations if o.publisher == publisher]
    points: list[TrendPoint] = []
    for pub in sorted({o.publisher for o in observations}):
        rows = [o for o in observations if o.publisher == pub]
        per_bucket: dict[str, dict[str, int]] = {}
        for obs in rows:
            label = _bucket_label(obs, tau)
            bucket = bucket_key(obs.day, granularity)
            per_bucket.setdefault(bucket, {}).setdefault(label, 0)
            per_bucket[bucket][label] += 1
        for bucket in bucket_range(min(o.day for o in rows), max(o.day for o in rows), granularity):
            points.append(_make_point(bucket, pub, per_bucket.get(bucket, {})))
    return points


def group_stance_shares(
    observations: Sequence[StanceObservation],
    granularity: str = "year",
) -> list[TrendPoint]:
    """Stance shares within (publisher, keyword group, bucket).

    A sentence hitting several groups contributes one count to each of
    them; the overall series still counts it once.
    """
    keyed: dict[tuple[str, str], dict[str, dict[str, int]]] = {}
    spans: dict[str, tuple[date, date]] = {}
    groups_seen: dict[str, set[str]] = {}
    for obs in observations:
        lo, hi = spans.get(obs.publisher, (obs.day, obs.day))
        spans[obs.publisher] = (min(lo, obs.day), max(hi, obs.day))
        groups_seen.setdefault(obs.publisher, set()).update(obs.groups)
        for group in obs.groups:
            per_bucket = keyed.setdefault((obs.publisher, group), {})
            bucket = bucket_key(obs.day, granularity)
            per_bucket.setdefault(bucket, {}).setdefault(obs.label, 0)
            per_bucket[bucket][obs.label] += 1
    points = []
    for publisher in sorted(spans):
        lo, hi = spans[publisher]
        for group in sorted(groups_seen[publisher]):
            per_bucket = keyed.get((publisher, group), {})
            for bucket in bucket_range(lo, hi, granularity):
                points.append(_make_point(bucket, publisher, per_bucket.get(bucket, {}), group=group))
    return points


@dataclass(frozen=True)
class CountPoint:
    bucket: str
    publisher: str
    count: int
    empty: bool = False


def sentence_counts(
    observations: Sequence[StanceObservation], granularity: str
) -> list[CountPoint]:
    """Topical-sentence volume per bucket and publisher."""
    points = []
    for pub in sorted({o.publisher for o in observations}):
        rows = [o for o in observations if o.publisher == pub]
        per_bucket: dict[str, int] = {}
        for obs in rows:
            bucket = bucket_key(obs.day, granularity)
            per_bucket[bucket] = per_bucket.get(bucket, 0) + 1
        for bucket in bucket_range(min(o.day for o in rows), max(o.day for o in rows), granularity):
            count = per_bucket.get(bucket, 0)
            points.append(CountPoint(bucket, pub, count, empty=count == 0))
    return points


def rebin_weekly_counts_to_month(points: Sequence[CountPoint]) -> list[CountPoint]:
    """Re-aggregate a weekly count series into months via each ISO week's
    Thursday; exact only where weeks nest inside a single month."""
    merged: dict[tuple[str, str], int] = {}
    for point in points:
        key = (point.publisher, week_key_to_month(point.bucket))
        merged[key] = merged.get(key, 0) + point.count
    return [
        CountPoint(bucket, publisher, count, empty=count == 0)
        for (publisher, bucket), count in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]


@dataclass(frozen=True)
class MentionSharePoint:
    bucket: str
    publisher: str
    articles: int
    topical: int
    share: float
    empty: bool = False


def article_mention_share(
    articles: Iterable[tuple[str, date, bool]], granularity: str
) -> list[MentionSharePoint]:
    """Share of articles per bucket containing at least one topical sentence.

    Input rows are (publisher, published date, is_topical); an article with
    many topical sentences still counts once.
    """
    rows = list(articles)
    points = []
    for pub in sorted({r[0] for r in rows}):
        mine = [r for r in rows if r[0] == pub]
        totals: dict[str, int] = {}
        topical: dict[str, int] = {}
        for _, day, is_topical in mine:
            bucket = bucket_key(day, granularity)
            totals[bucket] = totals.get(bucket, 0) + 1
            if is_topical:
                topical[bucket] = topical.get(bucket, 0) + 1
        for bucket in bucket_range(min(r[1] for r in mine), max(r[1] for r in mine), granularity):
            n = totals.get(bucket, 0)
            hits = topical.get(bucket, 0)
            points.append(MentionSharePoint(
                bucket, pub, n, hits, hits / n if n else 0.0, empty=n == 0,
            ))
    return points


# --- tidy CSV emission --------------------------------------------------------

def write_trend_csv(points: Sequence[TrendPoint], fh,
                    stances: Sequence[str] = STANCE_WITH_UNCERTAIN) -> None:
    writer = csv.writer(fh)
    writer.writerow(["bucket", "publisher", "group", "stance", "count", "share", "empty"])
    for point in points:
        for stance in stances:
            writer.writerow([
                point.bucket, point.publisher, point.group or "",
                stance, point.counts[stance], f"{point.shares[stance]:.6f}",
                "true" if point.empty else "false",
            ])


def write_count_csv(points: Sequence[CountPoint], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["bucket", "publisher", "count", "empty"])
    for point in points:
        writer.writerow([point.bucket, point.publisher, point.count,
                         "true" if point.empty else "false"])


def write_mention_share_csv(points: Sequence[MentionSharePoint], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["bucket", "publisher", "articles", "topical", "share", "empty"])
    for point in points:
        writer.writerow([point.bucket, point.publisher, point.articles, point.topical,
                         f"{point.share:.6f}", "true" if point.empty else "false"])
