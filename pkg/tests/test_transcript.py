import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BASELINE_PATH, CORPUS_DIR
from lectern.transcript import (
    CleanReport,
    LoopRecord,
    Transcript,
    TranscriptError,
    TranscriptSegment,
    UnsegmentedTranscriptError,
    clean_transcript,
    corpus_stats,
    detect_loops,
    load_cleaned,
    parse_transcript,
    transcript_from_dict,
    write_cleaned,
)
from oracles import loop_oracle


def make(texts, lecture_id="t", dur=1.0):
    segs = tuple(TranscriptSegment(i * dur, (i + 1) * dur, x) for i, x in enumerate(texts))
    return Transcript(lecture_id, segs, {})


# -- parsing -----------------------------------------------------------------------


def test_parse_segmented_json(tmp_path):
    p = tmp_path / "a.json"
    p.write_text(json.dumps({"lecture_id": "L1", "segments": [
        {"start": 0, "end": 1.5, "text": " Hello. "}, {"start": 1.5, "end": 3, "text": "World."}]}))
    t = parse_transcript(p)
    assert t.lecture_id == "L1"
    assert [s.text for s in t.segments] == ["Hello.", "World."]
    assert t.timed and t.duration == 3.0


def test_out_of_order_segments_are_resorted():
    t = transcript_from_dict({"lecture_id": "x", "segments": [
        {"start": 5, "end": 6, "text": "b"}, {"start": 0, "end": 1, "text": "a"}]})
    assert [s.text for s in t.segments] == ["a", "b"]
    assert t.source_meta["resorted"] == "true"


@pytest.mark.parametrize("seg, fragment", [
    ({"start": 2, "end": 1, "text": "x"}, "not after start"),
    ({"start": 1, "end": 1, "text": "x"}, "not after start"),
    ({"start": 0, "end": 1, "text": "   "}, "empty text"),
    ({"start": 0, "text": "x"}, "missing field 'end'"),
    ({"start": "0", "end": 1, "text": "x"}, "expected a number"),
])
def test_bad_segments_name_the_problem(seg, fragment):
    with pytest.raises(TranscriptError, match=fragment):
        transcript_from_dict({"lecture_id": "x", "segments": [seg]})


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"lecture_id": "x",\n "segments": [}')
    with pytest.raises(TranscriptError, match=r"line 2, column"):
        parse_transcript(p)


def test_missing_lecture_id(tmp_path):
    with pytest.raises(TranscriptError, match="lecture_id"):
        transcript_from_dict({"segments": []})


def test_plain_text_is_one_untimed_segment(tmp_path):
    p = tmp_path / "lecture_009.txt"
    p.write_text("so today\n  we talk   about entropy\n")
    t = parse_transcript(p, "plain-text")
    assert t.lecture_id == "lecture_009"
    assert not t.timed
    assert len(t.segments) == 1 and t.text == "so today we talk about entropy"
    with pytest.raises(UnsegmentedTranscriptError, match="unsegmented text"):
        t.require_timed()


def test_empty_plain_text(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("\n")
    assert parse_transcript(p, "plain-text").segments == ()


def test_unknown_format(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    with pytest.raises(ValueError):
        parse_transcript(p, "srt")


# -- loop detection ----------------------------------------------------------------


def test_run_of_two_is_not_a_loop():
    assert detect_loops(make(["a", "Yes.", "Yes.", "b"])) == []


def test_run_of_three_keeps_first():
    t = make(["a", "Okay.", "Okay.", "Okay.", "b"])
    cleaned, rep = clean_transcript(t)
    assert [s.text for s in cleaned.segments] == ["a", "Okay.", "b"]
    assert cleaned.segments[1].start == 1.0
    assert rep.removed_segment_count == 2
    (lp,) = rep.loops
    assert (lp.text, lp.count, lp.first_start, lp.last_end) == ("Okay.", 3, 1.0, 4.0)
    assert lp.uniform_one_second and lp.zero_gaps


def test_matching_is_case_sensitive_and_trimmed():
    assert detect_loops(make(["ok", "OK", "ok"])) == []
    assert len(detect_loops(make(["ok", "ok ", " ok"]))) == 1


def test_near_identical_text_is_not_merged():
    assert detect_loops(make(["What?", "What?", "What.", "What?"])) == []


def test_whole_transcript_one_run():
    cleaned, rep = clean_transcript(make(["x"] * 10))
    assert len(cleaned.segments) == 1 and rep.removed_segment_count == 9


def test_empty_transcript():
    cleaned, rep = clean_transcript(make([]))
    assert cleaned.segments == () and rep.loops == () and rep.removed_duration == 0


def test_loop_signature_flags():
    segs = (TranscriptSegment(0, 2, "x"), TranscriptSegment(2.5, 3.5, "x"), TranscriptSegment(3.5, 4.5, "x"))
    (lp,) = detect_loops(Transcript("t", segs, {}))
    assert not lp.uniform_one_second and not lp.zero_gaps
    assert lp.duration_removed == pytest.approx(4.5)


def test_baseline_spans_match_reported_durations():
    # the loop spans are the per-loop audio durations quoted for the baseline
    t = parse_transcript(BASELINE_PATH)
    spans = {lp.text: round(lp.duration_removed, 1) for lp in detect_loops(t)}
    assert spans == {"Elizabeth.": 50.5, "That's a lot.": 10.2, "You told me to.": 10.6, "Okay.": 3.0}
    assert round(sum(lp.duration_removed for lp in detect_loops(t)), 1) == 74.3


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "a ", "B", "What?"]), max_size=40))
def test_matches_brute_force_oracle(texts):
    t = make(texts)
    cleaned, rep = clean_transcript(t)
    kept, loops = loop_oracle(texts)
    assert [s.text for s in cleaned.segments] == [t.segments[i].text for i in kept]
    assert [(lp.text, lp.count) for lp in rep.loops] == loops
    assert rep.removed_segment_count == len(texts) - len(kept)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c"]), max_size=30))
def test_cleaning_is_idempotent_and_conserves_segments(texts):
    once, rep1 = clean_transcript(make(texts))
    twice, rep2 = clean_transcript(once)
    assert twice.segments == once.segments
    assert rep2.loops == ()
    assert rep1.clean_segment_count + rep1.removed_segment_count == rep1.raw_segment_count
    # order preserved: the cleaned list is a subsequence of the raw one
    it = iter(make(texts).segments)
    assert all(any(s == r for r in it) for s in once.segments)


# -- reports and corpus stats ---------------------------------------------------------


def test_clean_report_round_trip(tmp_path):
    t = make(["a", "z", "z", "z"], lecture_id="L7")
    cleaned, rep = clean_transcript(t)
    p = tmp_path / "L7.json"
    write_cleaned(cleaned, rep, p)
    t2, rep2 = load_cleaned(p)
    assert t2.segments == cleaned.segments
    assert rep2 == rep
    doc = json.loads(p.read_text())
    assert doc["clean_report"]["removed_segments"] == 2
    assert doc["clean_report"]["loops"][0]["duration_removed_s"] == 3.0


def test_loop_record_round_trip():
    lp = LoopRecord("x", 3, 1.0, 4.0, 3.0, 2, True, True)
    assert LoopRecord.from_dict(lp.to_dict()) == lp


def test_corpus_stats_totals():
    ts = [make(["a", "b"], "one"), make(["c", "c", "c", "c"], "two")]
    reps = [clean_transcript(t)[1] for t in ts]
    s = corpus_stats(ts, reps)
    assert (s.lecture_count, s.raw_segments, s.clean_segments, s.loop_count, s.removed_segments) == (2, 6, 3, 1, 3)


def test_corpus_stats_rejects_orphans_and_duplicates():
    a = make(["a"], "a")
    with pytest.raises(ValueError, match="b"):
        corpus_stats([a], [clean_transcript(a)[1], CleanReport("b", 0, 0, 0.0, ())])
    with pytest.raises(ValueError, match="duplicate"):
        corpus_stats([a, a], [clean_transcript(a)[1]])


def test_corpus_fixture_shape():
    files = sorted(CORPUS_DIR.glob("*.json"))
    assert len(files) == 39
    sizes = {p.stem: len(json.loads(p.read_text())["segments"]) for p in files}
    assert sizes["lecture_003"] == sizes["lecture_023"] == 0
    assert sum(sizes.values()) == 20_361
