"""Grounded answers from the retrieved context, with a no-model fallback."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any

from .bookindex import pages_label
from .llm import SYNTHESIS_TEMPERATURE, LlmError, LlmGateway
from .retrieval import ContextBlock, ContextEntry

log = logging.getLogger(__name__)

LLM_MODE = "llm"
FALLBACK_MODE = "fallback"
NO_MATCH_TEXT = "No matching topics found in the index."

SYSTEM_PROMPT = """\
You are a helpful teaching assistant for a chemical engineering thermodynamics course.
Answer the student's question using ONLY the textbook context provided below.
Rules:
- Use only the provided context. If it does not cover something, say so.
- Never invent chapter numbers, section numbers, section titles or page numbers.
- Include the specific page references for every topic you mention.
- Keep the answer to 3-5 sentences and point the student to the relevant sections."""


@dataclass(frozen=True)
class Reference:
    topic: str
    pages: str
    chapter: str | None
    section: str | None

    def render(self) -> str:
        where = ""
        if self.chapter:
            where = f" in Chapter {self.chapter}"
            if self.section:
                where += f", Section {self.section}"
        return f"{self.topic}: {self.pages}{where}."

    def to_dict(self) -> dict[str, Any]:
        return {"topic": self.topic, "pages": self.pages, "chapter": self.chapter, "section": self.section}


@dataclass(frozen=True)
class GroundedAnswer:
    body: str
    references: tuple[Reference, ...]
    mode: str
    unverified_citations: tuple[str, ...] = field(default=())

    @property
    def text(self) -> str:
        if self.mode == FALLBACK_MODE or not self.references:
            return self.body
        refs = "\n".join(r.render() for r in self.references)
        return f"{self.body}\n\nReferences:\n{refs}"


def _reference(entry: ContextEntry) -> Reference:
    loc = entry.location
    return Reference(
        topic=entry.rendered_path,
        pages=pages_label(entry.pages),
        chapter=loc.chapter_number if loc else None,
        section=loc.section_number if loc else None,
    )


def fallback_answer(ctx: ContextBlock) -> GroundedAnswer:
    if not ctx:
        return GroundedAnswer(NO_MATCH_TEXT, (), FALLBACK_MODE)
    top = ctx.entries[0]
    body = f'Check out "{top.rendered_path}" on {pages_label(top.pages)}.'
    return GroundedAnswer(body, (_reference(top),), FALLBACK_MODE)


_NUM = re.compile(r"(?<![\d.])(\d{1,4})(?![\d])")
_SECTION = re.compile(r"\bSection[\s~]+(\d+(?:\.\d+)+)", re.IGNORECASE)
_CHAPTER = re.compile(r"\bChapter[\s~]+(\d+)", re.IGNORECASE)


def _entry_pages(entry: ContextEntry) -> set[int]:
    out: set[int] = set()
    for p in entry.pages:
        out.update({p.first, p.last})
    return out


def extract_references(reply: str, ctx: ContextBlock) -> tuple[tuple[Reference, ...], tuple[str, ...]]:
    """References are the context entries the reply points at.

    An entry counts as cited when the reply mentions one of its page
    endpoints, its section number, or its top-level topic name. Page, chapter or section
    numbers in the reply that match nothing in the context are returned as
    unverified and never become references.
    """
    lower = reply.lower()
    sections_in_reply = set(_SECTION.findall(reply))
    chapters_in_reply = set(_CHAPTER.findall(reply))
    numbers_in_reply = {int(n) for n in _NUM.findall(_SECTION.sub(" ", _CHAPTER.sub(" ", reply)))}

    cited: list[ContextEntry] = []
    known_pages: set[int] = set()
    known_sections: set[str] = set()
    known_chapters: set[str] = set()
    for e in ctx.entries:
        pages = _entry_pages(e)
        known_pages |= pages
        sec = e.location.section_number if e.location else None
        chap = e.location.chapter_number if e.location else None
        if sec:
            known_sections.add(sec)
        if chap:
            known_chapters.add(chap)
        head = re.sub(r"\(.*?\)", "", e.topic_path[0]).strip().lower()
        if pages & numbers_in_reply or (sec and sec in sections_in_reply) or (head and head in lower):
            cited.append(e)

    unverified = sorted(
        [f"Section {s}" for s in sections_in_reply - known_sections]
        + [f"Chapter {c}" for c in chapters_in_reply - known_chapters]
    )
    # bare numbers are only suspicious when they look like page references
    for m in re.finditer(r"\bp(?:p|ages?)?\.?[\s~]*(\d{1,4})", reply, re.IGNORECASE):
        if int(m.group(1)) not in known_pages:
            unverified.append(f"page {m.group(1)}")
    if unverified:
        log.warning("answer cites material outside the retrieved context: %s", ", ".join(unverified))
    return tuple(_reference(e) for e in cited), tuple(unverified)


def build_user_prompt(query: str, ctx: ContextBlock) -> str:
    return f"Textbook context:\n{ctx.rendered_text}\n\nStudent question: {query.strip()}"


def synthesize(query: str, ctx: ContextBlock, gateway: LlmGateway | None) -> GroundedAnswer:
    """Answer ``query`` from ``ctx`` only.

    With an empty context the model is never called. When the gateway is
    missing or fails, the deterministic fallback answer is returned.
    """
    if not ctx:
        return fallback_answer(ctx)
    if gateway is None:
        return fallback_answer(ctx)
    try:
        reply, _ = gateway.generate(
            SYSTEM_PROMPT, build_user_prompt(query, ctx), json_mode=False, temperature=SYNTHESIS_TEMPERATURE
        )
    except LlmError as exc:
        log.warning("synthesis unavailable, using fallback: %s", exc)
        return fallback_answer(ctx)
    body = _strip_trailer(reply.strip())
    if not body:
        return fallback_answer(ctx)
    refs, unverified = extract_references(reply, ctx)
    if not refs:
        refs = tuple(_reference(e) for e in ctx.entries)
    return GroundedAnswer(body, refs, LLM_MODE, unverified)


def _strip_trailer(reply: str) -> str:
    """Drop any model-written reference list; the verified one is appended instead."""
    m = re.search(r"\n\s*\**references:?\**\s*\n", reply, re.IGNORECASE)
    return reply[: m.start()].rstrip() if m else reply

