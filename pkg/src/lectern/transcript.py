"""Timestamped transcript ingest, repetition-loop cleaning and quality stats.

ASR decoders occasionally get stuck emitting the same short phrase over
silence or noise. Such runs are detected here purely by text: three or more
consecutive segments whose trimmed text is identical. The first segment of a
run is kept, the rest are dropped, and the run is recorded for auditing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

log = logging.getLogger(__name__)

MIN_LOOP_RUN = 3
UNTIMED_KEY = "untimed"


class TranscriptError(ValueError):
    """Raised when a transcript file cannot be parsed."""


class UnsegmentedTranscriptError(ValueError):
    """Raised when a timed analysis is requested on a plain-text transcript."""

    def __init__(self, lecture_id: str):
        super().__init__(
            f"{lecture_id}: plain-text transcript has no timestamps; "
            "analyses that cannot be performed on unsegmented text were requested"
        )
        self.lecture_id = lecture_id


@dataclass(frozen=True)
class TranscriptSegment:
    start: float
    end: float
    text: str

    def to_dict(self) -> dict[str, Any]:
        return {"start": self.start, "end": self.end, "text": self.text}


@dataclass(frozen=True)
class Transcript:
    lecture_id: str
    segments: tuple[TranscriptSegment, ...]
    source_meta: dict[str, str] = field(default_factory=dict)

    @property
    def timed(self) -> bool:
        return self.source_meta.get(UNTIMED_KEY) != "true"

    @property
    def duration(self) -> float:
        """End time of the last segment (0 for empty or untimed transcripts)."""
        return max((s.end for s in self.segments), default=0.0)

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.segments)

    def require_timed(self) -> None:
        if not self.timed:
            raise UnsegmentedTranscriptError(self.lecture_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "lecture_id": self.lecture_id,
            "segments": [s.to_dict() for s in self.segments],
            "meta": dict(self.source_meta),
        }


@dataclass(frozen=True)
class LoopRecord:
    """One run of identical consecutive segments.

    ``duration_removed`` is the wall-clock span the run occupied
    (``last_end - first_start``), i.e. the time lost to the loop.
    ``uniform_one_second`` and ``zero_gaps`` are advisory signatures only;
    they never influence removal.
    """

    text: str
    count: int
    first_start: float
    last_end: float
    duration_removed: float
    segments_removed: int
    uniform_one_second: bool = False
    zero_gaps: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "count": self.count,
            "first_start": self.first_start,
            "last_end": self.last_end,
            "duration_removed_s": self.duration_removed,
            "uniform_one_second": self.uniform_one_second,
            "zero_gaps": self.zero_gaps,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> LoopRecord:
        count = int(d["count"])
        return cls(
            text=str(d["text"]),
            count=count,
            first_start=float(d["first_start"]),
            last_end=float(d["last_end"]),
            duration_removed=float(d["duration_removed_s"]),
            segments_removed=count - 1,
            uniform_one_second=bool(d.get("uniform_one_second", False)),
            zero_gaps=bool(d.get("zero_gaps", False)),
        )


@dataclass(frozen=True)
class CleanReport:
    lecture_id: str
    raw_segment_count: int
    removed_segment_count: int
    removed_duration: float
    loops: tuple[LoopRecord, ...]

    @property
    def clean_segment_count(self) -> int:
        return self.raw_segment_count - self.removed_segment_count

    def to_dict(self) -> dict[str, Any]:
        return {
            "raw_segments": self.raw_segment_count,
            "removed_segments": self.removed_segment_count,
            "removed_duration_s": round(self.removed_duration, 6),
            "loops": [lp.to_dict() for lp in self.loops],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], lecture_id: str) -> CleanReport:
        loops = tuple(LoopRecord.from_dict(x) for x in d.get("loops", []))
        return cls(
            lecture_id=lecture_id,
            raw_segment_count=int(d["raw_segments"]),
            removed_segment_count=int(d["removed_segments"]),
            removed_duration=float(d["removed_duration_s"]),
            loops=loops,
        )


@dataclass(frozen=True)
class CorpusStats:
    lecture_count: int = 0
    raw_segments: int = 0
    clean_segments: int = 0
    loop_count: int = 0
    removed_segments: int = 0
    removed_duration: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "lectures": self.lecture_count,
            "raw_segments": self.raw_segments,
            "hallucination_loops": self.loop_count,
            "segments_removed": self.removed_segments,
            "time_lost_s": round(self.removed_duration, 3),
            "segments_after_cleaning": self.clean_segments,
        }


# -- parsing -----------------------------------------------------------------


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TranscriptError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _segment(raw: Any, where: str) -> TranscriptSegment:
    if not isinstance(raw, dict):
        raise TranscriptError(f"{where}: segment must be an object")
    for key in ("start", "end", "text"):
        if key not in raw:
            raise TranscriptError(f"{where}: missing field {key!r}")
    start = _number(raw["start"], f"{where}.start")
    end = _number(raw["end"], f"{where}.end")
    text = raw["text"]
    if not isinstance(text, str):
        raise TranscriptError(f"{where}.text: expected a string")
    text = text.strip()
    if start < 0:
        raise TranscriptError(f"{where}: negative start {start}")
    if end <= start:
        raise TranscriptError(f"{where}: end {end} is not after start {start}")
    if not text:
        raise TranscriptError(f"{where}: empty text")
    return TranscriptSegment(start, end, text)


def transcript_from_dict(data: Any, source: str = "<memory>") -> Transcript:
    if not isinstance(data, dict):
        raise TranscriptError(f"{source}: top level must be an object")
    lecture_id = data.get("lecture_id")
    if not isinstance(lecture_id, str) or not lecture_id.strip():
        raise TranscriptError(f"{source}: missing or empty lecture_id")
    raw_segments = data.get("segments")
    if not isinstance(raw_segments, list):
        raise TranscriptError(f"{source}: 'segments' must be an array")
    segments = [_segment(s, f"{source}: segments[{i}]") for i, s in enumerate(raw_segments)]

    meta = {str(k): str(v) for k, v in (data.get("meta") or {}).items()}
    meta.setdefault("source_file", source)
    ordered = sorted(segments, key=lambda s: s.start)
    if ordered != segments:
        log.info("%s: segments out of order, re-sorted by start time", lecture_id)
        meta["resorted"] = "true"
    return Transcript(lecture_id.strip(), tuple(ordered), meta)


def parse_transcript(path: str | Path, format: str = "segmented-json") -> Transcript:
    """Load a transcript file.

    ``format`` is ``"segmented-json"`` or ``"plain-text"``. Plain text becomes a
    single untimed segment (start = end = 0) keyed by the file stem.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if format == "plain-text":
        body = " ".join(text.split())
        meta = {"source_file": str(path), UNTIMED_KEY: "true"}
        segments = (TranscriptSegment(0.0, 0.0, body),) if body else ()
        return Transcript(path.stem, segments, meta)
    if format != "segmented-json":
        raise ValueError(f"unknown transcript format {format!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TranscriptError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return transcript_from_dict(data, str(path))


def guess_format(path: str | Path) -> str:
    return "segmented-json" if Path(path).suffix.lower() == ".json" else "plain-text"


def load_cleaned(path: str | Path) -> tuple[Transcript, CleanReport | None]:
    """Parse a transcript, also returning its embedded clean report if present."""
    path = Path(path)
    transcript = parse_transcript(path, guess_format(path))
    report = None
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data.get("clean_report"), dict):
            report = CleanReport.from_dict(data["clean_report"], transcript.lecture_id)
    return transcript, report


# -- loop detection ------------------------------------------------------------


def _runs(segments: Sequence[TranscriptSegment]) -> Iterable[tuple[int, int]]:
    """Yield maximal ``[i, j)`` runs of equal text."""
    i = 0
    n = len(segments)
    while i < n:
        j = i + 1
        while j < n and segments[j].text.strip() == segments[i].text.strip():
            j += 1
        yield i, j
        i = j


def _loop_record(run: Sequence[TranscriptSegment]) -> LoopRecord:
    count = len(run)
    first_start, last_end = run[0].start, run[-1].end
    return LoopRecord(
        text=run[0].text.strip(),
        count=count,
        first_start=first_start,
        last_end=last_end,
        duration_removed=max(0.0, last_end - first_start),
        segments_removed=count - 1,
        uniform_one_second=all(abs((s.end - s.start) - 1.0) < 1e-6 for s in run),
        zero_gaps=all(abs(b.start - a.end) < 1e-6 for a, b in zip(run, run[1:])),
    )


def detect_loops(t: Transcript) -> list[LoopRecord]:
    return [
        _loop_record(t.segments[i:j])
        for i, j in _runs(t.segments)
        if j - i >= MIN_LOOP_RUN
    ]


def clean_transcript(t: Transcript) -> tuple[Transcript, CleanReport]:
    kept: list[TranscriptSegment] = []
    loops: list[LoopRecord] = []
    for i, j in _runs(t.segments):
        if j - i >= MIN_LOOP_RUN:
            loops.append(_loop_record(t.segments[i:j]))
            kept.append(t.segments[i])
        else:
            kept.extend(t.segments[i:j])
    report = CleanReport(
        lecture_id=t.lecture_id,
        raw_segment_count=len(t.segments),
        removed_segment_count=sum(lp.segments_removed for lp in loops),
        removed_duration=sum(lp.duration_removed for lp in loops),
        loops=tuple(loops),
    )
    return Transcript(t.lecture_id, tuple(kept), dict(t.source_meta)), report


def cleaned_document(t: Transcript, report: CleanReport) -> dict[str, Any]:
    doc = t.to_dict()
    doc["clean_report"] = report.to_dict()
    return doc


def write_cleaned(t: Transcript, report: CleanReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(cleaned_document(t, report), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


# -- corpus statistics ---------------------------------------------------------


def corpus_stats(transcripts: Sequence[Transcript], reports: Sequence[CleanReport]) -> CorpusStats:
    """Aggregate per-lecture clean reports, aligned to transcripts by lecture id."""
    ids = [t.lecture_id for t in transcripts]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ValueError(f"duplicate lecture ids: {', '.join(dupes)}")
    by_id = {r.lecture_id: r for r in reports}
    if len(by_id) != len(reports):
        raise ValueError("duplicate lecture ids among clean reports")
    orphans = sorted(set(ids).symmetric_difference(by_id))
    if orphans:
        raise ValueError(f"transcripts and clean reports do not align; orphans: {', '.join(orphans)}")
    return CorpusStats(
        lecture_count=len(reports),
        raw_segments=sum(r.raw_segment_count for r in reports),
        clean_segments=sum(r.clean_segment_count for r in reports),
        loop_count=sum(len(r.loops) for r in reports),
        removed_segments=sum(r.removed_segment_count for r in reports),
        removed_duration=sum(r.removed_duration for r in reports),
    )
