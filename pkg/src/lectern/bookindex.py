"""Back-of-book index and table-of-contents tree.

Index file: a JSON array of nodes ``{"topic": str, "pages": [[first, last] | p, ...],
"subtopics": [...]}``. A bare integer page ``p`` is shorthand for ``[p, p]``.

Nav tree file: ``{"title": str, "chapters": [node, ...]}`` (or a bare array of
chapters) where each node is ``{"number", "title", "first_page", "last_page"?,
"sections": [...]}``. A missing ``last_page`` is closed by the next sibling's
``first_page - 1``; the final section of a chapter inherits the chapter's last
page, and the final chapter must state its own.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

log = logging.getLogger(__name__)

MAX_DEPTH = 32
CHARS_PER_TOKEN = 4


class IndexParseError(ValueError):
    pass


class NavTreeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class PageRange:
    first: int
    last: int

    def __post_init__(self) -> None:
        if self.first < 1 or self.last < 1:
            raise ValueError(f"page numbers must be >= 1: {self.first}-{self.last}")
        if self.first > self.last:
            raise ValueError(f"inverted page range {self.first}-{self.last}")

    def intersects(self, other: PageRange) -> bool:
        return self.first <= other.last and other.first <= self.last

    def render(self) -> str:
        return str(self.first) if self.first == self.last else f"{self.first}--{self.last}"


def render_pages(pages: Sequence[PageRange]) -> str:
    """``[314-317, 440-442]`` -> ``"314--317, 440--442"``."""
    return ", ".join(p.render() for p in pages)


def pages_label(pages: Sequence[PageRange]) -> str:
    """``"page 320"`` for a lone page, ``"pages ..."`` otherwise."""
    single = len(pages) == 1 and pages[0].first == pages[0].last
    return f"{'page' if single else 'pages'} {render_pages(pages)}"


@dataclass(frozen=True)
class IndexEntry:
    topic: str
    pages: tuple[PageRange, ...] = ()
    subtopics: tuple[IndexEntry, ...] = ()
    path: tuple[str, ...] = ()

    @property
    def first_page(self) -> int | None:
        return min((p.first for p in self.pages), default=None)

    def walk(self) -> Iterator[IndexEntry]:
        yield self
        for sub in self.subtopics:
            yield from sub.walk()

    def to_dict(self) -> dict[str, Any]:
        return {
            "topic": self.topic,
            "pages": [[p.first, p.last] for p in self.pages],
            "subtopics": [s.to_dict() for s in self.subtopics],
        }


def iter_entries(index: Sequence[IndexEntry]) -> Iterator[IndexEntry]:
    for entry in index:
        yield from entry.walk()


def count_entries(index: Sequence[IndexEntry]) -> int:
    return sum(1 for _ in iter_entries(index))


def _page_range(raw: Any, where: str) -> PageRange:
    if isinstance(raw, bool):
        raise IndexParseError(f"{where}: bad page reference {raw!r}")
    if isinstance(raw, int):
        raw = [raw, raw]
    if (
        not isinstance(raw, list)
        or len(raw) != 2
        or not all(isinstance(x, int) and not isinstance(x, bool) for x in raw)
    ):
        raise IndexParseError(f"{where}: bad page reference {raw!r}")
    try:
        return PageRange(raw[0], raw[1])
    except ValueError as exc:
        raise IndexParseError(f"{where}: {exc}") from None


def _index_node(raw: Any, parent_path: tuple[str, ...], where: str, depth: int) -> IndexEntry:
    if depth > MAX_DEPTH:
        raise IndexParseError(f"{where}: index nested deeper than {MAX_DEPTH} levels")
    if not isinstance(raw, dict):
        raise IndexParseError(f"{where}: index node must be an object")
    topic = raw.get("topic")
    if not isinstance(topic, str) or not topic.strip():
        raise IndexParseError(f"{where}: missing topic")
    topic = topic.strip()
    path = parent_path + (topic,)
    label = " > ".join(path)
    pages_raw = raw.get("pages", [])
    if not isinstance(pages_raw, list):
        pages_raw = [pages_raw]
    pages = tuple(_page_range(p, f"{label}: pages[{i}]") for i, p in enumerate(pages_raw))
    subs_raw = raw.get("subtopics", [])
    if not isinstance(subs_raw, list):
        raise IndexParseError(f"{label}: subtopics must be an array")
    subs = tuple(
        _index_node(s, path, f"{label} > subtopics[{i}]", depth + 1)
        for i, s in enumerate(subs_raw)
    )
    return IndexEntry(topic, pages, subs, path)


def index_from_data(data: Any) -> list[IndexEntry]:
    if not isinstance(data, list):
        raise IndexParseError("index must be a JSON array of topic nodes")
    return [_index_node(node, (), f"[{i}]", 0) for i, node in enumerate(data)]


def parse_index(path: str | Path) -> list[IndexEntry]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IndexParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    index = index_from_data(data)
    log.info("loaded %d index entries from %s", count_entries(index), path)
    return index


def index_to_data(index: Sequence[IndexEntry]) -> list[dict[str, Any]]:
    return [e.to_dict() for e in index]


# -- navigation tree -----------------------------------------------------------


@dataclass(frozen=True)
class NavNode:
    kind: str  # "book" (root only), "chapter" or "section"
    number: str
    title: str
    first_page: int
    last_page: int
    children: tuple[NavNode, ...] = ()

    def contains(self, page: int) -> bool:
        return self.first_page <= page <= self.last_page

    @property
    def label(self) -> str:
        return f"{self.kind} {self.number}" if self.number else self.kind


@dataclass(frozen=True)
class PageContext:
    chapter_number: str
    chapter_title: str
    section_number: str | None = None
    section_title: str | None = None

    def render(self) -> str:
        """``Chapter 7, Section 7.4 (title)``; chapter title when no section."""
        if self.section_number is None:
            return f"Chapter {self.chapter_number} ({self.chapter_title})"
        return f"Chapter {self.chapter_number}, Section {self.section_number} ({self.section_title})"


def _positive_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise NavTreeError(f"{where}: expected a positive integer page, got {value!r}")
    return value


def _nav_level(
    raws: Any, kind: str, parent_last: int | None, where: str, depth: int
) -> tuple[NavNode, ...]:
    if depth > MAX_DEPTH:
        raise NavTreeError(f"{where}: nav tree nested deeper than {MAX_DEPTH} levels")
    if not isinstance(raws, list):
        raise NavTreeError(f"{where}: expected an array of nodes")
    firsts = []
    for i, raw in enumerate(raws):
        if not isinstance(raw, dict):
            raise NavTreeError(f"{where}[{i}]: node must be an object")
        firsts.append(_positive_int(raw.get("first_page"), f"{where}[{i}].first_page"))

    nodes = []
    for i, raw in enumerate(raws):
        number = str(raw.get("number", "")).strip()
        title = str(raw.get("title", "")).strip()
        name = f"{kind} {number or i}"
        last = raw.get("last_page")
        if last is None:
            if i + 1 < len(raws):
                last = firsts[i + 1] - 1
            elif parent_last is not None:
                last = parent_last
            else:
                raise NavTreeError(f"{name}: final {kind} needs an explicit last_page")
        last = _positive_int(last, f"{name}.last_page")
        if last < firsts[i]:
            raise NavTreeError(f"{name}: span {firsts[i]}-{last} is inverted")
        kids_raw = raw.get("sections", raw.get("children", []))
        kids = _nav_level(kids_raw, "section", last, f"{name}.sections", depth + 1)
        nodes.append(NavNode(kind, number, title, firsts[i], last, kids))
    return tuple(nodes)


def validate_nav(node: NavNode) -> None:
    """Check span containment and sibling ordering/non-overlap, recursively."""
    if node.first_page > node.last_page:
        raise NavTreeError(f"{node.label}: span {node.first_page}-{node.last_page} is inverted")
    prev: NavNode | None = None
    for child in node.children:
        if child.first_page < node.first_page or child.last_page > node.last_page:
            raise NavTreeError(
                f"{child.label} ({child.first_page}-{child.last_page}) lies outside "
                f"{node.label} ({node.first_page}-{node.last_page})"
            )
        if prev is not None and child.first_page <= prev.last_page:
            raise NavTreeError(
                f"{prev.label} ({prev.first_page}-{prev.last_page}) and "
                f"{child.label} ({child.first_page}-{child.last_page}) overlap or are out of order"
            )
        validate_nav(child)
        prev = child


def nav_from_data(data: Any) -> NavNode:
    if isinstance(data, list):
        data = {"chapters": data}
    if not isinstance(data, dict):
        raise NavTreeError("nav tree must be an object or an array of chapters")
    chapters = _nav_level(data.get("chapters", []), "chapter", None, "chapters", 0)
    first = min((c.first_page for c in chapters), default=1)
    last = max((c.last_page for c in chapters), default=1)
    root = NavNode("book", "", str(data.get("title", "")), first, last, chapters)
    validate_nav(root)
    return root


def parse_nav_tree(path: str | Path) -> NavNode:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise NavTreeError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return nav_from_data(data)


def nav_to_data(root: NavNode) -> dict[str, Any]:
    def node(n: NavNode) -> dict[str, Any]:
        return {
            "number": n.number,
            "title": n.title,
            "first_page": n.first_page,
            "last_page": n.last_page,
            "sections": [node(c) for c in n.children],
        }

    return {"title": root.title, "chapters": [node(c) for c in root.children]}


def max_page(root: NavNode) -> int:
    return root.last_page


def locate_page(root: NavNode, page: int) -> PageContext | None:
    """Chapter/section context for ``page``, or None when no chapter holds it."""
    chapter = next((c for c in root.children if c.contains(page)), None)
    if chapter is None:
        return None
    deepest = chapter
    while True:
        child = next((c for c in deepest.children if c.contains(page)), None)
        if child is None:
            break
        deepest = child
    if deepest is chapter:
        return PageContext(chapter.number, chapter.title)
    return PageContext(chapter.number, chapter.title, deepest.number, deepest.title)


# -- vocabulary prompts ------------------------------------------------------------


def vocabulary_prompt(
    index: Sequence[IndexEntry], page_window: PageRange | None = None, budget: int = 224
) -> str:
    """Comma-separated topic list sized for an ASR prompt slot.

    Topics whose pages intersect ``page_window`` (every topic when None) are
    ordered by first page then alphabetically, deduplicated without regard to
    case, and appended whole until ``budget`` tokens (4 chars each) run out.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    candidates: list[tuple[float, str, str]] = []
    for entry in iter_entries(index):
        if page_window is None:
            pages = entry.pages
            key = float(entry.first_page) if pages else float("inf")
        else:
            pages = tuple(p for p in entry.pages if p.intersects(page_window))
            if not pages:
                continue
            key = float(min(p.first for p in pages))
        topic = " ".join(entry.topic.split())
        candidates.append((key, topic.casefold(), topic))
    candidates.sort()

    limit = CHARS_PER_TOKEN * budget
    seen: set[str] = set()
    out = ""
    for _, folded, topic in candidates:
        if folded in seen:
            continue
        seen.add(folded)
        nxt = f"{out}, {topic}" if out else topic
        if len(nxt) > limit:
            break
        out = nxt
    return out


_RANGE_ARG = re.compile(r"^\s*(\d+)\s*[:\-]\s*(\d+)\s*$")


def parse_page_window(text: str) -> PageRange:
    """Parse ``"A:B"`` into a page range (raises ValueError when inverted)."""
    m = _RANGE_ARG.match(text)
    if not m:
        raise ValueError(f"page window must look like A:B, got {text!r}")
    return PageRange(int(m.group(1)), int(m.group(2)))
