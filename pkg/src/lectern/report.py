"""Instructor-facing reports: transcript quality, ASR comparison, analysis digest."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Sequence

from .analysis import KINDS, RunReport
from .transcript import CorpusStats, Transcript

PLURAL_MARK = "(s)"


@lru_cache(maxsize=1024)
def _term_pattern(term: str) -> re.Pattern[str]:
    plural = term.endswith(PLURAL_MARK)
    if plural:
        term = term[: -len(PLURAL_MARK)]
    parts = re.findall(r"[a-z0-9]+", term.lower())
    if not parts:
        raise ValueError(f"term {term!r} has no word characters")
    body = r"[^a-z0-9]+".join(re.escape(p) for p in parts)
    if plural:
        body += "s?"
    # lookahead so repeated multi-word terms ("a a" in "a a a") overlap
    return re.compile(rf"(?<![a-z0-9])(?=({body})(?![a-z0-9]))")


def count_term(text: str, term: str) -> int:
    """Whole-word, case-insensitive occurrences of ``term`` in ``text``.

    Words are maximal runs of ASCII letters and digits, so hyphens and
    punctuation separate words. A trailing ``(s)`` on the term also accepts
    the plural form of its last word, as in ``"thermodynamic(s)"``.
    """
    if not term.strip():
        raise ValueError("term must be non-empty")
    return len(_term_pattern(term).findall(text.lower()))


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class TermCountRow:
    term: str
    count_a: int
    count_b: int


@dataclass(frozen=True)
class LecturePair:
    lecture_id: str
    words_a: int
    words_b: int

    @property
    def ratio(self) -> float | None:
        return self.words_b / self.words_a if self.words_a else None


@dataclass
class ComparisonReport:
    pairs: list[LecturePair]
    term_rows: list[TermCountRow]
    unmatched_a: list[str] = field(default_factory=list)
    unmatched_b: list[str] = field(default_factory=list)
    label_a: str = "A"
    label_b: str = "B"

    def to_dict(self) -> dict[str, Any]:
        return {
            "labels": [self.label_a, self.label_b],
            "pairs": [
                {"lecture_id": p.lecture_id, "words_a": p.words_a, "words_b": p.words_b, "ratio": p.ratio}
                for p in self.pairs
            ],
            "term_rows": [{"term": r.term, "count_a": r.count_a, "count_b": r.count_b} for r in self.term_rows],
            "unmatched_a": self.unmatched_a,
            "unmatched_b": self.unmatched_b,
        }


def compare_corpora(
    a: Sequence[Transcript], b: Sequence[Transcript], terms: Sequence[str],
    label_a: str = "A", label_b: str = "B",
) -> ComparisonReport:
    """Word counts and domain-term totals for lectures present in both corpora."""
    by_a = {t.lecture_id: t for t in a}
    by_b = {t.lecture_id: t for t in b}
    shared = sorted(by_a.keys() & by_b.keys())
    if not shared:
        raise ValueError("no lecture ids are shared between the two corpora")
    pairs = []
    totals = {term: [0, 0] for term in terms}
    for lid in shared:
        ta, tb = by_a[lid].text, by_b[lid].text
        pairs.append(LecturePair(lid, word_count(ta), word_count(tb)))
        for term in terms:
            totals[term][0] += count_term(ta, term)
            totals[term][1] += count_term(tb, term)
    return ComparisonReport(
        pairs=pairs,
        term_rows=[TermCountRow(t, ca, cb) for t, (ca, cb) in totals.items()],
        unmatched_a=sorted(by_a.keys() - by_b.keys()),
        unmatched_b=sorted(by_b.keys() - by_a.keys()),
        label_a=label_a,
        label_b=label_b,
    )


# -- rendering --------------------------------------------------------------------


def _pct(part: float, whole: float) -> str:
    if not whole:
        return "0%"
    p = 100.0 * part / whole
    if p == 0 or p >= 1:
        return f"{p:.1f}%"
    return f"{float(f'{p:.2g}'):g}%"


def _table(rows: Sequence[tuple[str, ...]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for r in rows:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
    return out


@dataclass(frozen=True)
class Document:
    text: str
    data: dict[str, Any]

    def json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def render_reports(
    stats: CorpusStats | None,
    cmp: ComparisonReport | None = None,
    analyses: RunReport | None = None,
) -> Document:
    lines: list[str] = []
    data: dict[str, Any] = {}

    if stats is not None:
        data["transcript_quality"] = stats.to_dict()
        lines += ["Transcript quality", "=================="]
        lines += [
            f"Lectures: {stats.lecture_count:,}",
            f"Raw segments: {stats.raw_segments:,}",
            f"Hallucination loops: {stats.loop_count:,}",
            f"Segments removed: {stats.removed_segments:,} ({_pct(stats.removed_segments, stats.raw_segments)})",
            f"Time lost to hallucination: {stats.removed_duration:.1f} s",
            f"Segments after cleaning: {stats.clean_segments:,}",
        ]

    if cmp is not None:
        data["comparison"] = cmp.to_dict()
        if lines:
            lines.append("")
        lines += ["Transcript comparison", "====================="]
        rows = [("Lecture", f"{cmp.label_a} words", f"{cmp.label_b} words", "Ratio")]
        for p in cmp.pairs:
            rows.append((p.lecture_id, f"{p.words_a:,}", f"{p.words_b:,}",
                         "n/a" if p.ratio is None else f"{p.ratio:.2f}"))
        lines += _table(rows)
        ratios = [p.ratio for p in cmp.pairs if p.ratio is not None]
        if ratios:
            mean_a = sum(p.words_a for p in cmp.pairs) / len(cmp.pairs)
            mean_b = sum(p.words_b for p in cmp.pairs) / len(cmp.pairs)
            lines.append(f"Mean word count: {mean_a:,.0f} vs {mean_b:,.0f}")
            lines.append(f"Word count ratio: {min(ratios):.2f}--{max(ratios):.2f}")
        if cmp.term_rows:
            lines.append("")
            term_rows = [("Term (total)", cmp.label_a, cmp.label_b)]
            term_rows += [(f'"{r.term}"', str(r.count_a), str(r.count_b)) for r in cmp.term_rows]
            lines += _table(term_rows)
        if cmp.unmatched_a or cmp.unmatched_b:
            lines.append("")
            if cmp.unmatched_a:
                lines.append(f"Only in {cmp.label_a}: {', '.join(cmp.unmatched_a)}")
            if cmp.unmatched_b:
                lines.append(f"Only in {cmp.label_b}: {', '.join(cmp.unmatched_b)}")

    if analyses is not None:
        digest = analyses.to_dict()
        digest.pop("items")
        digest["failures"] = [
            {"lecture_id": i.lecture_id, "kind": i.kind, "error": i.error} for i in analyses.failures()
        ]
        data["analysis"] = digest
        if lines:
            lines.append("")
        lines += ["Lecture analyses", "================"]
        lines.append(f"Lectures: {digest['lectures']}")
        for kind in KINDS:
            if kind in digest["per_kind"]:
                k = digest["per_kind"][kind]
                lines.append(f"{kind}: {k['ok']} ok, {k['failed']} failed")
        counts = sorted(digest["question_counts"].values())
        if counts:
            lines.append(
                f"Questions per lecture: min {counts[0]}, max {counts[-1]}, mean {sum(counts) / len(counts):.1f}"
            )
        if digest["bimodal_suspicion"]:
            lines.append("WARNING: most lectures report the same question count; output may be formulaic")
        for f in digest["failures"]:
            lines.append(f"FAILED {f['lecture_id']} {f['kind']}: {f['error']}")

    return Document("\n".join(lines) + "\n" if lines else "", data)
