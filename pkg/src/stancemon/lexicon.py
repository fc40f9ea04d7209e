"""Keyword-group lexicon: regex matchers with positive and negative filters.

The shipped default covers eight immigration-related topic groups; a group
tags a sentence when at least one positive pattern matches and, if the
group carries a negative list, no negative pattern matches anywhere in the
sentence (vetoing e.g. bird-migration and migraine sentences).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .corpus import Sentence
from .errors import ValidationError

GROUP_NAMES = (
    "migration",
    "refugees",
    "foreign_workers",
    "foreign_students",
    "noncitizens",
    "radright_liberal_opposition",
    "race",
    "ethnicity",
)


@dataclass(frozen=True)
class KeywordGroup:
    name: str
    positive: tuple[str, ...]
    negative: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.positive:
            raise ValidationError(f"group {self.name!r} has no positive patterns")


@dataclass(frozen=True)
class GroupHit:
    sentence_id: str
    group: str
    matches: tuple[tuple[int, int, int], ...]  # (pattern index, start, end)

    def __post_init__(self):
        if not self.matches:
            raise ValidationError("GroupHit without matched substrings")


class Lexicon:
    """Compiled keyword groups; immutable and safe to share across threads."""

    def __init__(self, groups: Iterable[KeywordGroup]):
        self.groups = tuple(groups)
        seen = set()
        for grp in self.groups:
            if grp.name in seen:
                raise ValidationError(f"duplicate group name: {grp.name}")
            seen.add(grp.name)
        self._positive = {}
        self._negative = {}
        for grp in self.groups:
            self._positive[grp.name] = [
                _compile(pat, grp.name, i) for i, pat in enumerate(grp.positive)
            ]
            self._negative[grp.name] = [
                _compile(pat, grp.name, i) for i, pat in enumerate(grp.negative)
            ]

    def group_names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    def match_sentence(self, sentence: Sentence) -> list[GroupHit]:
        return self.match_text(sentence.sentence_id, sentence.text)

    def match_text(self, sentence_id: str, text: str) -> list[GroupHit]:
        hits = []
        for grp in self.groups:
            if any(rx.search(text) for rx in self._negative[grp.name]):
                continue
            matches = []
            for i, rx in enumerate(self._positive[grp.name]):
                for m in rx.finditer(text):
                    matches.append((i, m.start(), m.end()))
            if matches:
                hits.append(GroupHit(sentence_id, grp.name, tuple(sorted(matches))))
        return hits


def _compile(pattern: str, group: str, index: int) -> re.Pattern:
    try:
        return re.compile(pattern.lower(), re.IGNORECASE | re.UNICODE)
    except re.error as exc:
        raise ValidationError(
            f"group {group!r} pattern #{index} does not compile: {pattern!r} ({exc})"
        ) from exc


def _unquote(line: str) -> str:
    if len(line) >= 2 and line.startswith('"') and line.endswith('"'):
        return line[1:-1]
    return line


def parse_lexicon_config(text: str) -> list[KeywordGroup]:
    """Parse the sectioned lexicon format: [group:<name>] with positive=/negative= lists."""
    groups: list[KeywordGroup] = []
    name: Optional[str] = None
    lists: dict[str, list[str]] = {}
    current: Optional[list[str]] = None

    def flush():
        if name is not None:
            groups.append(
                KeywordGroup(
                    name=name,
                    positive=tuple(lists.get("positive", [])),
                    negative=tuple(lists.get("negative", [])),
                )
            )

    for raw in text.splitlines():
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[group:") and stripped.endswith("]"):
            flush()
            name = stripped[len("[group:"):-1].strip()
            lists = {}
            current = None
            continue
        if stripped in ("positive=", "negative="):
            if name is None:
                raise ValidationError(f"pattern list outside a group section: {stripped}")
            current = lists.setdefault(stripped[:-1], [])
            continue
        if current is None:
            raise ValidationError(f"pattern line outside a list: {line!r}")
        current.append(_unquote(line.lstrip()))
    flush()
    return groups


def compile_lexicon(
    path: Optional[Path | str] = None,
    require_groups: Optional[tuple[str, ...]] = GROUP_NAMES,
) -> Lexicon:
    """Compile a lexicon config file; defaults to the shipped eight groups."""
    if path is None:
        text = resources.files("stancemon.data").joinpath("default_lexicon.cfg").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    groups = parse_lexicon_config(text)
    if require_groups is not None:
        present = {g.name for g in groups}
        missing = [n for n in require_groups if n not in present]
        if missing:
            raise ValidationError(f"lexicon config is missing groups: {', '.join(missing)}")
    return Lexicon(groups)


def filter_corpus(
    lexicon: Lexicon, sentences: Iterable[Sentence]
) -> Iterator[tuple[Sentence, list[GroupHit]]]:
    """Yield only topical sentences (>=1 group hit), preserving input order."""
    for sentence in sentences:
        hits = lexicon.match_sentence(sentence)
        if hits:
            yield sentence, hits
