"""Structured per-lecture analyses: summary, questions, confusion, anecdotes.

Every model reply goes through :func:`lectern.llm.structured_call`, so schema
drift and placeholder echoing are handled in one place. On top of that:

* quoted text (question candidates, anecdote quotes) must occur in the
  transcript, otherwise it is dropped;
* timestamps must parse and must not lie past the end of the lecture;
* questions use two passes: high-recall extraction over the full transcript,
  then classification and filtering over the short candidate list only;
* repeated confusion entries on the same topic are collapsed.
"""

from __future__ import annotations

import json
import logging
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .llm import (
    MIN_ANALYSIS_CONTEXT,
    DecodeNote,
    FieldSpec,
    LlmGateway,
    SchemaError,
    SchemaSpec,
    TimestampRejected,
    format_timestamp,
    structured_call,
    validate_timestamp,
)
from .transcript import Transcript

log = logging.getLogger(__name__)

KINDS = ("summary", "questions", "confusion", "anecdotes")
LECTURE_TYPES = ("new_material", "review", "problem_solving", "exam", "other")
SPEAKERS = ("student", "instructor")
QTYPES = ("conceptual", "clarification", "procedural", "socratic")
RELEVANCE = ("high", "medium", "low")
SEVERITIES = ("minor", "moderate", "significant")
CATEGORIES = ("anecdote", "analogy", "joke", "real_world_example", "demonstration", "historical_note", "story")

MAX_QUESTIONS = 15
PASS_THROUGH_QUESTIONS = 5
DEDUP_WINDOW_S = 120.0
BIMODAL_SHARE = 0.6
BIMODAL_MIN_LECTURES = 5
REPLY_RESERVE_TOKENS = 2048
CHARS_PER_TOKEN = 4

UNGROUNDED = "ungrounded_quote"
TIMESTAMP_REJECTED = "timestamp_rejected"
VALUE_NORMALIZED = "value_normalized"


class AnalysisError(Exception):
    """An analysis could not run or produced unusable output for one lecture."""

    def __init__(self, lecture_id: str, message: str):
        super().__init__(f"{lecture_id}: {message}")
        self.lecture_id = lecture_id


# -- records -------------------------------------------------------------------


@dataclass(frozen=True)
class TopicItem:
    name: str
    description: str = ""


@dataclass(frozen=True)
class SummaryRecord:
    title: str
    lecture_type: str
    topics: tuple[TopicItem, ...]
    key_concepts: tuple[str, ...]
    key_equations: tuple[str, ...]
    narrative: str

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["topics"] = [asdict(t) for t in self.topics]
        d["key_concepts"] = list(self.key_concepts)
        d["key_equations"] = list(self.key_equations)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SummaryRecord:
        return cls(
            title=d["title"],
            lecture_type=d["lecture_type"],
            topics=tuple(TopicItem(**t) for t in d["topics"]),
            key_concepts=tuple(d["key_concepts"]),
            key_equations=tuple(d["key_equations"]),
            narrative=d["narrative"],
        )


@dataclass(frozen=True)
class QuestionCandidate:
    timestamp: int
    text: str
    speaker_guess: str = ""


@dataclass(frozen=True)
class QuestionRecord:
    timestamp: int
    speaker: str
    qtype: str
    relevance: str
    text: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> QuestionRecord:
        return cls(**d)


@dataclass(frozen=True)
class ConfusionRecord:
    timestamp: int
    topic: str
    evidence: str
    severity: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ConfusionRecord:
        return cls(**d)


@dataclass(frozen=True)
class AnecdoteRecord:
    category: str
    quote: str
    description: str
    topic: str
    purpose: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AnecdoteRecord:
        return cls(**d)


RECORD_TYPES: dict[str, Any] = {
    "summary": SummaryRecord,
    "questions": QuestionRecord,
    "confusion": ConfusionRecord,
    "anecdotes": AnecdoteRecord,
}


# -- schemas ---------------------------------------------------------------------

_TOPIC_ITEM = SchemaSpec((
    FieldSpec("name", aliases=("topic", "title")),
    FieldSpec("description", aliases=("notes", "summary", "details"), required=False, default=""),
))

SUMMARY_SCHEMA = SchemaSpec((
    FieldSpec("title", aliases=("lecture_title",)),
    FieldSpec("lecture_type", aliases=("type", "classification"), required=False, default="other"),
    FieldSpec("topics", "array", aliases=("main_topics",), items=_TOPIC_ITEM, required=False, default=list),
    FieldSpec("key_concepts", "array", aliases=("concepts",), items="string", required=False, default=list),
    FieldSpec("key_equations", "array", aliases=("equations",), items="string", required=False, default=list),
    FieldSpec("narrative", aliases=("summary", "narrative_summary")),
))

CANDIDATE_SCHEMA = SchemaSpec((
    FieldSpec(
        "candidates",
        "array",
        aliases=("questions", "items"),
        items=SchemaSpec((
            FieldSpec("timestamp", "timestamp", aliases=("time",)),
            FieldSpec("text", aliases=("quote", "question")),
            FieldSpec("speaker", aliases=("speaker_guess",), required=False, default=""),
        )),
    ),
))

SELECTION_SCHEMA = SchemaSpec((
    FieldSpec(
        "selected",
        "array",
        aliases=("questions", "kept", "items"),
        items=SchemaSpec((
            FieldSpec("id", "number", aliases=("index", "number", "candidate")),
            FieldSpec("speaker", required=False, default=""),
            FieldSpec("qtype", aliases=("type", "question_type"), required=False, default=""),
            FieldSpec("relevance", aliases=("significance", "importance"), required=False, default=""),
        )),
    ),
))

CONFUSION_SCHEMA = SchemaSpec((
    FieldSpec(
        "confusion_points",
        "array",
        aliases=("confusions", "points", "items"),
        items=SchemaSpec((
            FieldSpec("timestamp", "timestamp", aliases=("time",)),
            FieldSpec("topic", aliases=("name",)),
            FieldSpec("evidence", aliases=("description", "notes"), required=False, default=""),
            FieldSpec("severity", aliases=("level",), required=False, default=""),
        )),
    ),
))

ANECDOTE_SCHEMA = SchemaSpec((
    FieldSpec(
        "items",
        "array",
        aliases=("anecdotes", "examples"),
        items=SchemaSpec((
            FieldSpec("category", aliases=("type", "kind"), required=False, default=""),
            FieldSpec("quote", aliases=("verbatim", "text")),
            FieldSpec("description", aliases=("notes", "summary"), required=False, default=""),
            FieldSpec("topic", aliases=("name",), required=False, default=""),
            FieldSpec("purpose", aliases=("pedagogical_purpose",), required=False, default=""),
        )),
    ),
))


# -- prompts ---------------------------------------------------------------------

_COMMON = (
    "You analyse a transcript of a university chemical engineering lecture. "
    "Reply with a single JSON object and nothing else. "
    "Do NOT use placeholder text: timestamps must be real times copied from the "
    "transcript lines, written like \"0:15:42\"."
)

SUMMARY_PROMPT = _COMMON + """
Produce a structured summary with these fields:
{"title": "...", "lecture_type": "new_material | review | problem_solving | exam | other",
 "topics": [{"name": "...", "description": "..."}], "key_concepts": ["..."],
 "key_equations": ["..."], "narrative": "a short paragraph"}"""

CANDIDATE_PROMPT = _COMMON + """
List every question asked in the lecture, by students or by the instructor.
Copy each question word for word from the transcript. Favour recall: include
anything that might be a question.
{"candidates": [{"timestamp": "0:15:42", "text": "exact words", "speaker": "student | instructor"}]}"""

SELECTION_PROMPT = """\
You receive a numbered list of candidate questions from one lecture.
Classify each and keep only the 5 to 15 most pedagogically significant ones
(fewer if fewer are given). Ignore filler such as "right?" or "okay?" and
classroom management such as "any questions?".
Reply with JSON only:
{"selected": [{"id": 1, "speaker": "student | instructor",
  "qtype": "conceptual | clarification | procedural | socratic",
  "relevance": "high | medium | low"}]}"""

CONFUSION_PROMPT = _COMMON + """
Identify moments of apparent student confusion or instructor re-explanation.
{"confusion_points": [{"timestamp": "0:15:42", "topic": "...",
  "evidence": "what in the transcript shows it", "severity": "minor | moderate | significant"}]}"""

ANECDOTE_PROMPT = _COMMON + """
Catalogue the instructor's anecdotes, analogies, jokes, real-world examples,
demonstrations, historical notes and stories. Quote each one word for word.
{"items": [{"category": "anecdote | analogy | joke | real_world_example | demonstration | historical_note | story",
  "quote": "exact words", "description": "...", "topic": "...", "purpose": "..."}]}"""


def render_transcript(t: Transcript) -> str:
    if not t.timed:
        return t.text
    return "\n".join(f"[{format_timestamp(s.start)}] {s.text}" for s in t.segments)


def render_candidates(candidates: Sequence[QuestionCandidate]) -> str:
    return "\n".join(
        f"{i}. [{format_timestamp(c.timestamp)}] {c.text}" for i, c in enumerate(candidates, start=1)
    )


# -- helpers ---------------------------------------------------------------------------


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


_ELLIPSIS = re.compile(r"\.\.\.|…")


def is_grounded(quote: str, transcript_text: str) -> bool:
    """Whitespace- and case-insensitive containment; ``...`` may elide text."""
    haystack = _norm(transcript_text)
    pos = 0
    fragments = [_norm(f).strip(" \"'“”") for f in _ELLIPSIS.split(quote)]
    fragments = [f for f in fragments if f]
    if not fragments:
        return False
    for frag in fragments:
        found = haystack.find(frag, pos)
        if found < 0:
            return False
        pos = found + len(frag)
    return True


def _choice(value: str, allowed: Sequence[str], synonyms: dict[str, str], default: str,
            what: str, notes: list[DecodeNote]) -> str:
    key = re.sub(r"[\s\-]+", "_", value.strip().lower())
    key = synonyms.get(key, key)
    if key in allowed:
        return key
    notes.append(DecodeNote(VALUE_NORMALIZED, f"{what} {value!r} -> {default}"))
    return default


_TYPE_SYN = {"new": "new_material", "lecture": "new_material", "problem": "problem_solving",
             "problems": "problem_solving", "examination": "exam", "quiz": "exam", "midterm": "exam"}
_SPEAKER_SYN = {"s": "student", "students": "student", "i": "instructor", "professor": "instructor",
                "teacher": "instructor", "lecturer": "instructor"}
_QTYPE_SYN = {"conceptual_question": "conceptual", "rhetorical": "socratic", "procedure": "procedural"}
_REL_SYN = {"med": "medium", "moderate": "medium"}
_SEV_SYN = {"low": "minor", "mild": "minor", "medium": "moderate", "high": "significant",
            "severe": "significant", "major": "significant"}
_CAT_SYN = {"real_world": "real_world_example", "realworld_example": "real_world_example",
            "example": "real_world_example", "history": "historical_note", "historical": "historical_note",
            "humor": "joke", "humour": "joke", "demo": "demonstration", "personal_anecdote": "anecdote"}


def _check_context(t: Transcript, gateway: LlmGateway, system: str, user: str) -> None:
    ctx = gateway.config.context_tokens
    if ctx < MIN_ANALYSIS_CONTEXT:
        raise AnalysisError(t.lecture_id, f"context window {ctx} is below {MIN_ANALYSIS_CONTEXT} tokens")
    needed = (len(system) + len(user)) // CHARS_PER_TOKEN + REPLY_RESERVE_TOKENS
    if needed > ctx:
        raise AnalysisError(
            t.lecture_id,
            f"prompt needs about {needed} tokens but the context window is {ctx}; "
            "raise context_tokens rather than letting the server truncate silently",
        )


def _call(t: Transcript, gateway: LlmGateway, system: str, user: str, schema: SchemaSpec,
          notes: list[DecodeNote] | None) -> dict[str, Any]:
    _check_context(t, gateway, system, user)
    record, exchange = structured_call(gateway, system, user, schema)
    if notes is not None:
        notes.extend(exchange.decode_notes)
    return record


def _require_segments(t: Transcript) -> None:
    if not t.segments:
        raise AnalysisError(t.lecture_id, "transcript has no segments")


# -- analyses ---------------------------------------------------------------------------


def summarize(t: Transcript, gateway: LlmGateway, notes: list[DecodeNote] | None = None) -> SummaryRecord:
    _require_segments(t)
    local: list[DecodeNote] = []
    rec = _call(t, gateway, SUMMARY_PROMPT, render_transcript(t), SUMMARY_SCHEMA, local)
    ltype = _choice(rec["lecture_type"] or "other", LECTURE_TYPES, _TYPE_SYN, "other", "lecture_type", local)
    if notes is not None:
        notes.extend(local)
    topics = tuple(TopicItem(x["name"], x["description"]) for x in rec["topics"] if x["name"])
    if not rec["title"]:
        raise SchemaError("title", "empty")
    if not rec["narrative"]:
        raise SchemaError("narrative", "empty")
    if not topics and ltype != "exam":
        raise SchemaError("topics", "no topics for a non-exam lecture")
    return SummaryRecord(
        title=rec["title"],
        lecture_type=ltype,
        topics=topics,
        key_concepts=tuple(rec["key_concepts"]),
        key_equations=tuple(rec["key_equations"]),
        narrative=rec["narrative"],
    )


def extract_question_candidates(
    t: Transcript, gateway: LlmGateway, notes: list[DecodeNote] | None = None
) -> list[QuestionCandidate]:
    """Pass 1: verbatim question candidates from the full transcript."""
    t.require_timed()
    _require_segments(t)
    local: list[DecodeNote] = []
    rec = _call(t, gateway, CANDIDATE_PROMPT, render_transcript(t), CANDIDATE_SCHEMA, local)
    text = t.text
    out = []
    for c in rec["candidates"]:
        try:
            ts = validate_timestamp(c["timestamp"], t.duration)
        except TimestampRejected as exc:
            local.append(DecodeNote(TIMESTAMP_REJECTED, str(exc)))
            continue
        if not c["text"] or not is_grounded(c["text"], text):
            local.append(DecodeNote(UNGROUNDED, c["text"][:80]))
            log.info("%s: dropped question candidate not found in transcript: %r", t.lecture_id, c["text"][:80])
            continue
        out.append(QuestionCandidate(ts, c["text"], c["speaker"]))
    if notes is not None:
        notes.extend(local)
    return out


_REL_RANK = {"high": 0, "medium": 1, "low": 2}


def filter_questions(
    candidates: Sequence[QuestionCandidate], gateway: LlmGateway, notes: list[DecodeNote] | None = None
) -> list[QuestionRecord]:
    """Pass 2: classify and keep the most significant questions.

    Only the rendered candidate list is sent, never the transcript. At most
    15 questions are kept; with five or fewer candidates every one is kept.
    Timestamps and text come from the candidates, not from the reply.
    """
    if not candidates:
        return []
    local: list[DecodeNote] = []
    record, exchange = structured_call(gateway, SELECTION_PROMPT, render_candidates(candidates), SELECTION_SCHEMA)
    local.extend(exchange.decode_notes)

    chosen: dict[int, QuestionRecord] = {}
    for sel in record["selected"]:
        idx = sel["id"]
        if not isinstance(idx, int) and not (isinstance(idx, float) and idx.is_integer()):
            local.append(DecodeNote(VALUE_NORMALIZED, f"non-integer id {idx!r} ignored"))
            continue
        idx = int(idx)
        if not 1 <= idx <= len(candidates) or idx in chosen:
            local.append(DecodeNote(VALUE_NORMALIZED, f"id {idx} out of range or repeated"))
            continue
        cand = candidates[idx - 1]
        chosen[idx] = _classified(cand, sel, local)

    if len(candidates) <= PASS_THROUGH_QUESTIONS:
        for i, cand in enumerate(candidates, start=1):
            if i not in chosen:
                local.append(DecodeNote(VALUE_NORMALIZED, f"candidate {i} kept by pass-through rule"))
                chosen[i] = _classified(cand, {}, local)

    kept = sorted(chosen.values(), key=lambda q: _REL_RANK[q.relevance])[:MAX_QUESTIONS]
    if notes is not None:
        notes.extend(local)
    return sorted(kept, key=lambda q: (q.timestamp, q.text))


def _classified(cand: QuestionCandidate, sel: dict[str, Any], notes: list[DecodeNote]) -> QuestionRecord:
    speaker_raw = sel.get("speaker") or cand.speaker_guess or "student"
    return QuestionRecord(
        timestamp=cand.timestamp,
        speaker=_choice(speaker_raw, SPEAKERS, _SPEAKER_SYN, "student", "speaker", notes),
        qtype=_choice(sel.get("qtype") or "conceptual", QTYPES, _QTYPE_SYN, "conceptual", "qtype", notes),
        relevance=_choice(sel.get("relevance") or "medium", RELEVANCE, _REL_SYN, "medium", "relevance", notes),
        text=cand.text,
    )


def identify_questions(t: Transcript, gateway: LlmGateway, notes: list[DecodeNote] | None = None) -> list[QuestionRecord]:
    return filter_questions(extract_question_candidates(t, gateway, notes), gateway, notes)


_SEV_RANK = {s: i for i, s in enumerate(SEVERITIES)}


def dedup_confusion(records: Iterable[ConfusionRecord], window: float = DEDUP_WINDOW_S) -> list[ConfusionRecord]:
    """Collapse consecutive same-topic records less than ``window`` seconds apart.

    Each group keeps its earliest record, upgraded to the group's highest
    severity.
    """
    ordered = sorted(records, key=lambda r: r.timestamp)
    out: list[ConfusionRecord] = []
    last_ts = None
    for r in ordered:
        if out and last_ts is not None and _norm(out[-1].topic) == _norm(r.topic) and r.timestamp - last_ts <= window:
            head = out[-1]
            if _SEV_RANK.get(r.severity, 0) > _SEV_RANK.get(head.severity, 0):
                out[-1] = ConfusionRecord(head.timestamp, head.topic, head.evidence, r.severity)
        else:
            out.append(r)
        last_ts = r.timestamp
    return out


def detect_confusion(t: Transcript, gateway: LlmGateway, notes: list[DecodeNote] | None = None,
                     window: float = DEDUP_WINDOW_S) -> list[ConfusionRecord]:
    t.require_timed()
    _require_segments(t)
    local: list[DecodeNote] = []
    rec = _call(t, gateway, CONFUSION_PROMPT, render_transcript(t), CONFUSION_SCHEMA, local)
    out = []
    for c in rec["confusion_points"]:
        try:
            ts = validate_timestamp(c["timestamp"], t.duration)
        except TimestampRejected as exc:
            local.append(DecodeNote(TIMESTAMP_REJECTED, str(exc)))
            continue
        if not c["topic"]:
            continue
        sev = _choice(c["severity"] or "moderate", SEVERITIES, _SEV_SYN, "moderate", "severity", local)
        out.append(ConfusionRecord(ts, c["topic"], c["evidence"], sev))
    if notes is not None:
        notes.extend(local)
    return dedup_confusion(out, window)


def catalog_anecdotes(t: Transcript, gateway: LlmGateway, notes: list[DecodeNote] | None = None) -> list[AnecdoteRecord]:
    _require_segments(t)
    local: list[DecodeNote] = []
    rec = _call(t, gateway, ANECDOTE_PROMPT, render_transcript(t), ANECDOTE_SCHEMA, local)
    text = t.text
    out = []
    for item in rec["items"]:
        quote = item["quote"]
        if not quote or not is_grounded(quote, text):
            local.append(DecodeNote(UNGROUNDED, quote[:80]))
            continue
        category = _choice(item["category"] or "story", CATEGORIES, _CAT_SYN, "story", "category", local)
        out.append(AnecdoteRecord(category, quote, item["description"], item["topic"], item["purpose"]))
    if notes is not None:
        notes.extend(local)
    return out


ANALYSES: dict[str, Callable[..., Any]] = {
    "summary": summarize,
    "questions": identify_questions,
    "confusion": detect_confusion,
    "anecdotes": catalog_anecdotes,
}


# -- corpus driver -----------------------------------------------------------------------


@dataclass
class RunItem:
    lecture_id: str
    kind: str
    ok: bool
    record_count: int = 0
    elapsed: float = 0.0
    error: str | None = None
    notes: list[dict[str, str]] = field(default_factory=list)


@dataclass
class RunReport:
    items: list[RunItem] = field(default_factory=list)
    model: str = ""

    def successes(self, kind: str) -> int:
        return sum(1 for i in self.items if i.kind == kind and i.ok)

    def failures(self) -> list[RunItem]:
        return [i for i in self.items if not i.ok]

    @property
    def question_counts(self) -> dict[str, int]:
        return {i.lecture_id: i.record_count for i in self.items if i.kind == "questions" and i.ok}

    @property
    def bimodal_suspicion(self) -> bool:
        """Too many lectures share one question count: the model is likely
        emitting a fixed-length list rather than reading the transcript."""
        counts = list(self.question_counts.values())
        if len(counts) < BIMODAL_MIN_LECTURES:
            return False
        _, top = Counter(counts).most_common(1)[0]
        return top / len(counts) >= BIMODAL_SHARE

    def to_dict(self) -> dict[str, Any]:
        kinds = sorted({i.kind for i in self.items}, key=lambda k: KINDS.index(k) if k in KINDS else 99)
        return {
            "model": self.model,
            "lectures": len({i.lecture_id for i in self.items}),
            "per_kind": {
                k: {"ok": self.successes(k), "failed": sum(1 for i in self.items if i.kind == k and not i.ok)}
                for k in kinds
            },
            "bimodal_suspicion": self.bimodal_suspicion,
            "question_counts": self.question_counts,
            "items": [asdict(i) for i in self.items],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunReport:
        return cls([RunItem(**i) for i in d.get("items", [])], d.get("model", ""))


def output_document(lecture_id: str, kind: str, model: str, records: Sequence[Any]) -> dict[str, Any]:
    return {
        "lecture_id": lecture_id,
        "kind": kind,
        "model": model,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "records": [r.to_dict() for r in records],
    }


def load_records(path: str | Path) -> tuple[str, list[Any]]:
    """Read an analysis output file back into record objects."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    cls = RECORD_TYPES[doc["kind"]]
    return doc["kind"], [cls.from_dict(r) for r in doc["records"]]


def _analyze_lecture(t: Transcript, kinds: Sequence[str], gateway: LlmGateway,
                     out_dir: Path | None, clock: Callable[[], float]) -> list[RunItem]:
    items = []
    for kind in kinds:
        notes: list[DecodeNote] = []
        started = clock()
        try:
            result = ANALYSES[kind](t, gateway, notes)
            records = [result] if kind == "summary" else list(result)
        except Exception as exc:  # one bad lecture must not abort the run
            log.warning("%s/%s failed: %s", t.lecture_id, kind, exc)
            items.append(RunItem(t.lecture_id, kind, False, 0, clock() - started, str(exc),
                                 [n.to_dict() for n in notes]))
            continue
        if out_dir is not None:
            doc = output_document(t.lecture_id, kind, gateway.config.model_name, records)
            (out_dir / f"{t.lecture_id}.{kind}.json").write_text(
                json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
            )
        items.append(RunItem(t.lecture_id, kind, True, len(records), clock() - started, None,
                             [n.to_dict() for n in notes]))
    return items


def analyze_corpus(
    transcripts: Sequence[Transcript],
    kinds: Iterable[str],
    gateway: LlmGateway,
    out_dir: str | Path | None = None,
    *,
    clock: Callable[[], float] = time.monotonic,
) -> RunReport:
    """Run the requested analyses over every lecture.

    Lectures run in parallel up to the gateway's lane count; the analyses of a
    single lecture run in order. Failures are recorded per lecture and kind.
    """
    kinds = [k for k in KINDS if k in set(kinds)]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = RunReport(model=gateway.config.model_name)
    if not transcripts or not kinds:
        return report
    with ThreadPoolExecutor(max_workers=gateway.config.lanes) as pool:
        for items in pool.map(lambda t: _analyze_lecture(t, kinds, gateway, out, clock), transcripts):
            report.items.extend(items)
    if report.bimodal_suspicion:
        log.warning("question counts cluster on one value; check for fixed-length model output")
    if out is not None:
        (out / "run_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return report
