"""Search-term extraction from student queries.

Two independent extractors: a deterministic one (stopwords plus longest-match
recognition of known multi-word phrases) and an LLM one that also proposes
related concepts. Callers run both and fall back to the pattern result when
the model is unavailable.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from .llm import ANALYSIS_TEMPERATURE, LlmError, LlmGateway, MalformedOutput

log = logging.getLogger(__name__)

PATTERN = "pattern"
LLM = "llm"

_WORD = re.compile(r"[a-z0-9]+")


class ExtractionUnavailable(Exception):
    """The LLM extractor produced nothing usable; use the pattern result."""


def normalize_term(text: str) -> str:
    """Lowercase, hyphens as spaces, whitespace collapsed."""
    return " ".join(text.lower().replace("-", " ").split())


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower().replace("-", " "))


@dataclass(frozen=True)
class TermSet:
    terms: tuple[str, ...]
    origin: str
    expanded: bool = False

    @classmethod
    def build(cls, raw: Iterable[str], origin: str, expanded: bool = False) -> TermSet:
        seen: dict[str, None] = {}
        for t in raw:
            n = normalize_term(t)
            if n:
                seen.setdefault(n, None)
        return cls(tuple(seen), origin, expanded)

    def __bool__(self) -> bool:
        return bool(self.terms)


def read_word_list(path: str | Path | None, default: str) -> list[str]:
    """One entry per line, ``#`` starts a comment. ``path=None`` reads packaged data."""
    if path is None:
        text = resources.files("lectern").joinpath("data", default).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


@dataclass(frozen=True)
class PhraseLexicon:
    phrases: tuple[str, ...]
    stopwords: frozenset[str]

    def __post_init__(self) -> None:
        for p in self.phrases:
            if len(words(p)) < 2:
                raise ValueError(f"lexicon phrase {p!r} must contain at least two words")

    @classmethod
    def load(cls, lexicon_path: str | Path | None = None, stopword_path: str | Path | None = None) -> PhraseLexicon:
        phrases = read_word_list(lexicon_path, "lexicon.txt")
        stop = read_word_list(stopword_path, "stopwords.txt")
        return cls(tuple(phrases), frozenset(w.lower() for w in stop))

    def phrase_tokens(self) -> list[tuple[str, ...]]:
        """Phrases as token tuples, longest first."""
        toks = {tuple(words(p)) for p in self.phrases}
        return sorted(toks, key=lambda t: (-len(t), t))


def extract_pattern(query: str, lexicon: PhraseLexicon) -> TermSet:
    tokens = words(query)
    phrases = lexicon.phrase_tokens()
    found: list[str] = []
    i = 0
    while i < len(tokens):
        match = next((p for p in phrases if tuple(tokens[i:i + len(p)]) == p), None)
        if match:
            found.append(" ".join(match))
            i += len(match)
            continue
        tok = tokens[i]
        if len(tok) > 1 and tok not in lexicon.stopwords:
            found.append(tok)
        i += 1
    return TermSet.build(found, PATTERN)


EXTRACTION_SYSTEM_PROMPT = """\
You help students search the index of a chemical engineering thermodynamics textbook.
Given a student question, extract the technical search terms it contains and suggest
closely related concepts a student should also look up.
Reply with a JSON object with exactly two arrays of short lowercase strings:
{"terms": ["..."], "related": ["..."]}
Use textbook index vocabulary. Do not include full sentences."""


def _string_items(value: Any) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list):
        return [v for v in value if isinstance(v, str)]
    return []


def _parse_term_reply(raw: str) -> tuple[list[str], list[str]]:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedOutput(f"term reply is not JSON: {exc}") from None
    if not isinstance(data, dict) or not ({"terms", "related"} & data.keys()):
        raise MalformedOutput("term reply lacks 'terms' and 'related'")
    return _string_items(data.get("terms")), _string_items(data.get("related"))


def extract_llm(query: str, gateway: LlmGateway) -> TermSet:
    """Ask the model for terms plus related concepts.

    One repair re-prompt is made on undecodable output; after that, or on any
    transport failure, :class:`ExtractionUnavailable` is raised.
    """
    prompt = f"Student question: {query.strip()}"
    for attempt in (1, 2):
        try:
            raw, _ = gateway.generate(
                EXTRACTION_SYSTEM_PROMPT, prompt, json_mode=True, temperature=ANALYSIS_TEMPERATURE
            )
            terms, related = _parse_term_reply(raw)
        except MalformedOutput as exc:
            if attempt == 1:
                prompt = f"Student question: {query.strip()}\nReply with the JSON object only."
                continue
            raise ExtractionUnavailable(str(exc)) from exc
        except LlmError as exc:
            raise ExtractionUnavailable(str(exc)) from exc
        return TermSet.build(terms + related, LLM, expanded=bool(TermSet.build(related, LLM)))
    raise AssertionError("unreachable")
