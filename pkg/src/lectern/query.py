"""End-to-end student query: dual-path extraction, search, merge, synthesis."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Sequence

from .bookindex import IndexEntry, NavNode
from .llm import LlmGateway, LlmUnavailable
from .retrieval import (
    DEFAULT_K,
    DEFAULT_THRESHOLD,
    ContextBlock,
    MergedMatch,
    assemble_context,
    filter_and_order,
    merge_max,
    search_index,
)
from .synthesis import GroundedAnswer, synthesize
from .terms import ExtractionUnavailable, PhraseLexicon, TermSet, extract_llm, extract_pattern

log = logging.getLogger(__name__)


@dataclass
class QueryResult:
    query: str
    pattern_terms: TermSet
    llm_terms: TermSet | None
    merged: list[MergedMatch]
    context: ContextBlock
    answer: GroundedAnswer
    warnings: list[str] = field(default_factory=list)


class QueryEngine:
    """Holds the loaded index and answers one query at a time.

    ``gateway=None`` means pattern-only extraction and fallback synthesis.
    ``llm_timeout`` bounds how long the pattern result waits for the LLM
    extractor before proceeding alone.
    """

    def __init__(
        self,
        index: Sequence[IndexEntry],
        nav: NavNode,
        lexicon: PhraseLexicon,
        gateway: LlmGateway | None = None,
        *,
        threshold: float = DEFAULT_THRESHOLD,
        k: int = DEFAULT_K,
        llm_timeout: float | None = None,
    ):
        self.index = index
        self.nav = nav
        self.lexicon = lexicon
        self.gateway = gateway
        self.threshold = threshold
        self.k = k
        self.llm_timeout = llm_timeout

    def _llm_terms(self, query: str, warnings: list[str]) -> tuple[TermSet | None, bool]:
        """LLM term set (or None) and whether the server looked unreachable."""
        if self.gateway is None:
            return None, False
        pool = ThreadPoolExecutor(max_workers=1)
        fut = pool.submit(extract_llm, query, self.gateway)
        try:
            return fut.result(timeout=self.llm_timeout), False
        except ExtractionUnavailable as exc:
            warnings.append(f"LLM term extraction unavailable, using pattern terms only: {exc}")
            return None, isinstance(exc.__cause__, LlmUnavailable)
        except FutureTimeout:
            warnings.append("LLM term extraction timed out, using pattern terms only")
        finally:
            pool.shutdown(wait=False)
        return None, False

    def ask(self, query: str) -> QueryResult:
        warnings: list[str] = []
        with ThreadPoolExecutor(max_workers=1) as pool:
            # pattern path runs alongside the (slower) LLM path
            pattern_future = pool.submit(extract_pattern, query, self.lexicon)
            llm_terms, server_down = self._llm_terms(query, warnings)
            pattern_terms = pattern_future.result()

        pattern_hits = search_index(pattern_terms, self.index, self.nav)
        llm_hits = search_index(llm_terms, self.index, self.nav) if llm_terms else []
        merged = merge_max(pattern_hits, llm_hits)
        ordered = filter_and_order(merged, self.threshold)
        ctx = assemble_context(ordered, self.nav, self.k)

        answer = synthesize(query, ctx, None if server_down else self.gateway)
        if self.gateway is not None and answer.mode == "fallback" and ctx:
            warnings.append("LLM unavailable; answered with the deterministic fallback")
        for w in warnings:
            log.warning(w)
        return QueryResult(query, pattern_terms, llm_terms, ordered, ctx, answer, warnings)
