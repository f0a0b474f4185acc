"""Index search, max-score merging of the two extraction paths, and context assembly.

Scoring for an index entry against a term set, over distinct matched terms t:

    score = sum(alnum_len(t) + (5 if the entry's own topic starts with t else 0))
            + page_bonus                                    # llm path only
    page_bonus = round_half_up(5 * (1 - first_page / max_page)), floored at 0

A term matches when it occurs at word boundaries in the entry's full topic
path (``parent > child``), ignoring case and treating hyphens as spaces.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Sequence

from .bookindex import (
    IndexEntry,
    NavNode,
    PageContext,
    PageRange,
    iter_entries,
    locate_page,
    pages_label,
    render_pages,
)
from .terms import LLM, PATTERN, TermSet, normalize_term

START_BONUS = 5
PAGE_BONUS_MAX = 5
DEFAULT_THRESHOLD = 10.0
DEFAULT_K = 5
PATH_SEP = " > "


@dataclass(frozen=True)
class ScoredMatch:
    topic_path: tuple[str, ...]
    pages: tuple[PageRange, ...]
    score: float
    origin: str
    matched_terms: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[tuple[str, ...], int | None]:
        return self.topic_path, _first_page(self.pages)


@dataclass(frozen=True)
class MergedMatch:
    topic_path: tuple[str, ...]
    pages: tuple[PageRange, ...]
    score: float
    sources: frozenset[str]

    @property
    def first_page(self) -> int | None:
        return _first_page(self.pages)

    @property
    def rendered_path(self) -> str:
        return PATH_SEP.join(self.topic_path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "topic_path": list(self.topic_path),
            "pages": render_pages(self.pages),
            "score": self.score,
            "sources": sorted(self.sources),
        }


def _first_page(pages: Sequence[PageRange]) -> int | None:
    return min((p.first for p in pages), default=None)


def alnum_len(term: str) -> int:
    return sum(ch.isalnum() for ch in term)


@lru_cache(maxsize=4096)
def _term_regex(term: str) -> re.Pattern[str]:
    body = r"\s+".join(re.escape(w) for w in term.split())
    return re.compile(rf"(?<![a-z0-9]){body}(?![a-z0-9])")


def page_bonus(first_page: int | None, last_page_of_book: int) -> int:
    if first_page is None or last_page_of_book <= 0:
        return 0
    # round-half-up of MAX * (1 - first/last) in integers; floats misround at .5
    num = 2 * PAGE_BONUS_MAX * (last_page_of_book - first_page) + last_page_of_book
    return max(0, num // (2 * last_page_of_book))


def score_entry(entry: IndexEntry, terms: TermSet, last_page_of_book: int) -> ScoredMatch | None:
    path_text = normalize_term(PATH_SEP.join(entry.path or (entry.topic,)))
    own = normalize_term(entry.topic)
    score = 0
    matched = []
    for t in terms.terms:
        rx = _term_regex(t)
        if not rx.search(path_text):
            continue
        matched.append(t)
        score += alnum_len(t)
        if rx.match(own):
            score += START_BONUS
    if not matched:
        return None
    if terms.origin == LLM:
        score += page_bonus(entry.first_page, last_page_of_book)
    return ScoredMatch(entry.path or (entry.topic,), entry.pages, float(score), terms.origin, tuple(matched))


def search_index(terms: TermSet, index: Sequence[IndexEntry], nav: NavNode) -> list[ScoredMatch]:
    """Score every entry (subtopics included) that matches at least one term."""
    if not terms:
        return []
    out = []
    for entry in iter_entries(index):
        m = score_entry(entry, terms, nav.last_page)
        if m is not None:
            out.append(m)
    return out


def merge_max(pattern_results: Sequence[ScoredMatch], llm_results: Sequence[ScoredMatch]) -> list[MergedMatch]:
    """Combine both paths per entry, keeping the larger score, never a blend."""
    merged: dict[Any, MergedMatch] = {}
    for m in [*pattern_results, *llm_results]:
        prev = merged.get(m.key)
        if prev is None:
            merged[m.key] = MergedMatch(m.topic_path, m.pages, m.score, frozenset({m.origin}))
        else:
            merged[m.key] = MergedMatch(
                prev.topic_path, prev.pages, max(prev.score, m.score), prev.sources | {m.origin}
            )
    return list(merged.values())


def filter_and_order(matches: Sequence[MergedMatch], threshold: float = DEFAULT_THRESHOLD) -> list[MergedMatch]:
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    kept = [m for m in matches if m.score >= threshold and m.pages]
    return sorted(kept, key=lambda m: (m.first_page, -m.score, m.topic_path))


@dataclass(frozen=True)
class ContextEntry:
    rank: int
    topic_path: tuple[str, ...]
    pages: tuple[PageRange, ...]
    location: PageContext | None

    @property
    def rendered_path(self) -> str:
        return PATH_SEP.join(self.topic_path)

    @property
    def rendered_pages(self) -> str:
        return render_pages(self.pages)

    def render(self) -> str:
        where = self.location.render() if self.location else "unknown"
        return (
            f"{self.rank}. {self.rendered_path} ({pages_label(self.pages)})\n"
            f"   Location: {where}"
        )


@dataclass(frozen=True)
class ContextBlock:
    entries: tuple[ContextEntry, ...] = ()

    @property
    def rendered_text(self) -> str:
        return "\n".join(e.render() for e in self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)


def assemble_context(matches: Sequence[MergedMatch], nav: NavNode, k: int = DEFAULT_K) -> ContextBlock:
    if k < 1:
        raise ValueError("k must be at least 1")
    entries = []
    for rank, m in enumerate(matches[:k], start=1):
        first = m.first_page
        location = locate_page(nav, first) if first is not None else None
        entries.append(ContextEntry(rank, m.topic_path, m.pages, location))
    return ContextBlock(tuple(entries))


def explain(matches: Sequence[MergedMatch]) -> str:
    """JSON dump of merged matches for ``--explain``."""
    return json.dumps([m.to_dict() for m in matches], indent=2)


__all__ = [
    "PATTERN",
    "LLM",
    "ScoredMatch",
    "MergedMatch",
    "ContextEntry",
    "ContextBlock",
    "search_index",
    "merge_max",
    "filter_and_order",
    "assemble_context",
    "score_entry",
    "page_bonus",
    "alnum_len",
    "explain",
]
