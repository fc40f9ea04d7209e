"""Article ingestion, text cleaning and sentence segmentation.

Articles are persisted as one JSONL file per publisher with a sidecar
index (id -> byte offset). Sentences are the unit of analysis downstream;
segmentation is rule-based and deterministic.
"""

from __future__ import annotations

import csv
import io
import json
import re
import unicodedata
from dataclasses import dataclass, field, asdict
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import ValidationError

# Estonian abbreviations that do not terminate a sentence.
DEFAULT_ABBREVIATIONS = frozenset({"hr.", "pr.", "nt.", "jne.", "e."})

# Sentences longer than this, or with this many semicolons, get flagged as
# list-like and are excluded from annotation sampling (never dropped).
LONG_SENTENCE_CHARS = 600
LIST_LIKE_SEMICOLONS = 10

_TAG_RE = re.compile(r"<[^>]*>")
_WS_RE = re.compile(r"\s+")
_TERMINATORS = ".!?…"
_CLOSERS = "»«\"'”’)]"
_OPENERS = "«\"'„“‘(["


@dataclass(frozen=True)
class Article:
    id: str
    publisher: str
    published_at: str
    title: str
    body: str
    periodical: Optional[str] = None
    language: Optional[str] = None

    def published_date(self) -> date:
        return parse_published_at(self.published_at)


@dataclass(frozen=True)
class Sentence:
    article_id: str
    index: int
    text: str
    span: tuple[int, int]
    flagged: bool = False

    @property
    def sentence_id(self) -> str:
        return f"{self.article_id}:{self.index}"


@dataclass
class IngestReport:
    accepted: int = 0
    rejects: list[tuple[int, str, str]] = field(default_factory=list)

    def reject(self, row: int, article_id: str, reason: str) -> None:
        self.rejects.append((row, article_id, reason))


def parse_published_at(value: str) -> date:
    """Parse an ISO-8601 date or date-time down to its calendar date."""
    text = value.strip()
    if not text:
        raise ValidationError("empty date")
    try:
        return datetime.fromisoformat(text.replace("Z", "+00:00")).date()
    except ValueError:
        pass
    try:
        return date.fromisoformat(text[:10])
    except ValueError as exc:
        raise ValidationError(f"unparseable date: {value!r}") from exc


def clean_text(raw: str) -> str:
    """Strip markup tags and control characters, collapse whitespace.

    Idempotent: clean_text(clean_text(x)) == clean_text(x).
    """
    text = _TAG_RE.sub(" ", raw)
    text = "".join(
        ch for ch in text
        if not (unicodedata.category(ch) == "Cc" and not ch.isspace())
    )
    return _WS_RE.sub(" ", text).strip()


def _is_sentence_start(ch: str) -> bool:
    return ch.isupper() or ch.isdigit() or ch in _OPENERS


def _abbreviation_before(body: str, dot_pos: int, abbreviations: frozenset[str]) -> bool:
    start = dot_pos
    while start > 0 and (body[start - 1].isalpha() or body[start - 1] == "-"):
        start -= 1
    word = body[start:dot_pos + 1].lower()
    return word in abbreviations


def segment_sentences(
    article: Article,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> list[Sentence]:
    """Split a cleaned article body into sentences with character spans.

    A sentence ends after a run of {. ! ? ...} (plus any closing quotes)
    followed by whitespace and an uppercase letter, digit or opening quote,
    unless the word before a '.' is a known abbreviation.
    """
    body = article.body
    sentences: list[Sentence] = []
    start = 0
    i = 0
    n = len(body)
    while i < n:
        ch = body[i]
        if ch not in _TERMINATORS:
            i += 1
            continue
        run_end = i
        while run_end + 1 < n and body[run_end + 1] in _TERMINATORS:
            run_end += 1
        close_end = run_end
        while close_end + 1 < n and body[close_end + 1] in _CLOSERS:
            close_end += 1
        after = close_end + 1
        if after >= n:
            i = after
            continue
        if not body[after].isspace():
            i = run_end + 1
            continue
        next_char_pos = after
        while next_char_pos < n and body[next_char_pos].isspace():
            next_char_pos += 1
        if next_char_pos >= n or not _is_sentence_start(body[next_char_pos]):
            i = run_end + 1
            continue
        if run_end == i and ch == "." and _abbreviation_before(body, i, abbreviations):
            i += 1
            continue
        _append_sentence(sentences, article.id, body, start, close_end + 1)
        start = next_char_pos
        i = next_char_pos
    if start < n:
        _append_sentence(sentences, article.id, body, start, n)
    return sentences


def _append_sentence(
    out: list[Sentence], article_id: str, body: str, start: int, end: int
) -> None:
    while start < end and body[start].isspace():
        start += 1
    while end > start and body[end - 1].isspace():
        end -= 1
    if end <= start:
        return
    text = body[start:end]
    out.append(
        Sentence(
            article_id=article_id,
            index=len(out),
            text=text,
            span=(start, end),
            flagged=is_list_like(text),
        )
    )


def is_list_like(text: str) -> bool:
    return len(text) > LONG_SENTENCE_CHARS or text.count(";") >= LIST_LIKE_SEMICOLONS


class ArticleStore:
    """Per-publisher JSONL article files with an id -> byte-offset index.

    Writes go through a whole-file rewrite to a temp path followed by an
    atomic rename; concurrent readers are safe, writers must serialize.
    """

    def __init__(self, data_dir: Path | str):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def _paths(self, publisher: str) -> tuple[Path, Path]:
        safe = re.sub(r"[^A-Za-z0-9_-]", "_", publisher)
        return (
            self.data_dir / f"articles_{safe}.jsonl",
            self.data_dir / f"articles_{safe}.idx.json",
        )

    def publishers(self) -> list[str]:
        out = []
        for idx in sorted(self.data_dir.glob("articles_*.idx.json")):
            with idx.open(encoding="utf-8") as fh:
                out.append(json.load(fh)["publisher"])
        return sorted(set(out))

    def ids(self, publisher: str) -> set[str]:
        _, idx_path = self._paths(publisher)
        if not idx_path.exists():
            return set()
        with idx_path.open(encoding="utf-8") as fh:
            return set(json.load(fh)["offsets"])

    def append(self, publisher: str, articles: Iterable[Article]) -> int:
        jsonl_path, idx_path = self._paths(publisher)
        existing = list(self.iter_articles(publisher)) if jsonl_path.exists() else []
        known = {a.id for a in existing}
        added = 0
        rows = existing[:]
        for art in articles:
            if art.id in known:
                raise ValidationError(f"duplicate article id: {art.id}")
            known.add(art.id)
            rows.append(art)
            added += 1
        offsets: dict[str, int] = {}
        tmp = jsonl_path.with_suffix(".jsonl.tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for art in rows:
                offsets[art.id] = fh.tell()
                fh.write(json.dumps(asdict(art), ensure_ascii=False, sort_keys=True))
                fh.write("\n")
        tmp.rename(jsonl_path)
        idx_tmp = idx_path.with_suffix(".idx.json.tmp")
        with idx_tmp.open("w", encoding="utf-8") as fh:
            json.dump({"publisher": publisher, "offsets": offsets}, fh, ensure_ascii=False)
        idx_tmp.rename(idx_path)
        return added

    def get(self, publisher: str, article_id: str) -> Article:
        jsonl_path, idx_path = self._paths(publisher)
        with idx_path.open(encoding="utf-8") as fh:
            offset = json.load(fh)["offsets"][article_id]
        with jsonl_path.open("rb") as fh:
            fh.seek(offset)
            return Article(**json.loads(fh.readline().decode("utf-8")))

    def iter_articles(self, publisher: str) -> Iterator[Article]:
        jsonl_path, _ = self._paths(publisher)
        if not jsonl_path.exists():
            return
        with jsonl_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield Article(**json.loads(line))

    def iter_all(self) -> Iterator[Article]:
        for publisher in self.publishers():
            yield from self.iter_articles(publisher)


def _rows_from_stream(source: io.IOBase | Iterable[bytes], fmt: str) -> Iterator[dict]:
    if hasattr(source, "read"):
        data = source.read()
    else:
        data = b"".join(source)
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValidationError(f"source is not valid UTF-8: {exc}") from exc
    else:
        text = data
    if fmt == "csv":
        yield from csv.DictReader(io.StringIO(text))
    elif fmt == "jsonl":
        for line in text.splitlines():
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    yield {"__parse_error__": str(exc)}
    else:
        raise ValidationError(f"unknown ingest format: {fmt!r}")


def ingest_articles(
    source,
    fmt: str,
    publisher: str,
    store: ArticleStore,
    languages: Optional[list[str]] = None,
    window: Optional[tuple[Optional[date], Optional[date]]] = None,
    publisher_registry: Optional[list[str]] = None,
) -> IngestReport:
    """Validate and persist rows from a CSV/JSONL stream.

    Per-row failures (bad date, empty body, duplicate id, rejected language)
    are recorded in the report and do not abort the run; an undecodable
    stream does.
    """
    report = IngestReport()
    known = store.ids(publisher)
    for pub in store.publishers():
        known |= store.ids(pub)
    batch: list[Article] = []
    for row_no, row in enumerate(_rows_from_stream(source, fmt), start=1):
        if "__parse_error__" in row:
            report.reject(row_no, "", f"bad jsonl row: {row['__parse_error__']}")
            continue
        art_id = str(row.get("id") or "").strip()
        if not art_id:
            report.reject(row_no, "", "missing id")
            continue
        if art_id in known:
            report.reject(row_no, art_id, "duplicate id")
            continue
        row_publisher = str(row.get("publisher") or "").strip() or publisher
        if publisher_registry is not None and row_publisher not in publisher_registry:
            report.reject(row_no, art_id, f"unknown publisher: {row_publisher}")
            continue
        language = str(row.get("language") or "").strip() or None
        if language is not None and languages is not None and language not in languages:
            report.reject(row_no, art_id, f"rejected language: {language}")
            continue
        raw_date = str(row.get("date") or "").strip()
        try:
            published = parse_published_at(raw_date)
        except ValidationError:
            report.reject(row_no, art_id, f"bad date: {raw_date!r}")
            continue
        if window is not None:
            lo, hi = window
            if (lo is not None and published < lo) or (hi is not None and published > hi):
                report.reject(row_no, art_id, f"date outside corpus window: {raw_date}")
                continue
        body = clean_text(str(row.get("body") or ""))
        if not body:
            report.reject(row_no, art_id, "empty body")
            continue
        batch.append(
            Article(
                id=art_id,
                publisher=row_publisher,
                published_at=raw_date,
                title=clean_text(str(row.get("title") or "")),
                body=body,
                periodical=str(row.get("periodical") or "").strip() or None,
                language=language,
            )
        )
        known.add(art_id)
        report.accepted += 1
    by_publisher: dict[str, list[Article]] = {}
    for art in batch:
        by_publisher.setdefault(art.publisher, []).append(art)
    for pub, arts in sorted(by_publisher.items()):
        store.append(pub, arts)
    return report
