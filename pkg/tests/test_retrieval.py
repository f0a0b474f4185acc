import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lectern.bookindex import PageRange, index_from_data, nav_from_data
from lectern.retrieval import (
    ContextBlock,
    MergedMatch,
    ScoredMatch,
    alnum_len,
    assemble_context,
    explain,
    filter_and_order,
    merge_max,
    page_bonus,
    search_index,
)
from lectern.terms import LLM, PATTERN, TermSet
from oracles import blend_oracle, exhaustive_scores, page_bonus_oracle


def sm(path, score, origin=PATTERN, pages=((1, 2),)):
    return ScoredMatch(tuple(path), tuple(PageRange(*p) for p in pages), float(score), origin, ())


def test_alnum_len():
    assert alnum_len("fugacity coefficient") == 19
    assert alnum_len("non ideal gas") == 11


def test_page_bonus_boundaries():
    assert page_bonus(1000, 1000) == 0
    assert page_bonus(1, 1000) == 5
    assert page_bonus(500, 1000) == 3  # 2.5 rounds half up
    assert page_bonus(None, 1000) == 0
    assert page_bonus(2000, 1000) == 0


def test_scoring_rules(nav):
    idx = index_from_data([{"topic": "Liquid(s)", "subtopics": [{"topic": "fugacity of", "pages": [[316, 317]]}]}])
    (pat,) = search_index(TermSet.build(["fugacity"], PATTERN), idx, nav)
    assert pat.score == 8 + 5 and pat.topic_path == ("Liquid(s)", "fugacity of")
    (llm,) = search_index(TermSet.build(["fugacity"], LLM), idx, nav)
    assert llm.score == 13 + round(5 * (1 - 316 / 1000))


def test_terms_match_whole_words_only(nav):
    idx = index_from_data([{"topic": "Gases", "pages": [1]}, {"topic": "gas law", "pages": [2]}])
    hits = search_index(TermSet.build(["gas"], PATTERN), idx, nav)
    assert [h.topic_path for h in hits] == [("gas law",)]


def test_parent_topic_terms_reach_subtopics(nav):
    idx = index_from_data([{"topic": "Entropy", "pages": [100], "subtopics": [{"topic": "generation", "pages": [958]}]}])
    hits = {h.topic_path: h.score for h in search_index(TermSet.build(["entropy"], PATTERN), idx, nav)}
    # the start bonus is for the entry's own topic, not its ancestors
    assert hits == {("Entropy",): 12.0, ("Entropy", "generation"): 7.0}


def test_entries_without_pages_are_scored_then_filtered(index, nav):
    hits = search_index(TermSet.build(["fugacity"], PATTERN), index, nav)
    bare = [h for h in hits if h.topic_path == ("Fugacity",)]
    assert bare and bare[0].pages == ()
    assert all(m.topic_path != ("Fugacity",) for m in filter_and_order(merge_max(hits, [])))


def test_empty_terms(index, nav):
    assert search_index(TermSet.build([], PATTERN), index, nav) == []


def test_max_merge_keeps_single_path_score():
    merged = merge_max([sm(["Corresponding states", "fugacity coefficient"], 21)], [])
    assert merged[0].score == 21
    assert blend_oracle(0, 21) == pytest.approx(6.3)
    assert [m.score for m in filter_and_order(merged, 10)] == [21]


def test_max_merge_takes_larger_and_records_sources():
    (m,) = merge_max([sm(["A"], 12)], [sm(["A"], 17, LLM)])
    assert m.score == 17 and m.sources == {PATTERN, LLM}


def test_same_topic_different_pages_stay_distinct():
    merged = merge_max([sm(["A"], 12, pages=((5, 5),))], [sm(["A"], 12, LLM, pages=((9, 9),))])
    assert len(merged) == 2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcde"), st.integers(0, 30)), max_size=10),
       st.lists(st.tuples(st.sampled_from("abcde"), st.integers(0, 30)), max_size=10))
def test_merge_is_max_per_key_and_symmetric(pat, llm):
    p = [sm([k], s) for k, s in pat]
    q = [sm([k], s, LLM) for k, s in llm]
    merged = {m.topic_path: m.score for m in merge_max(p, q)}
    expect = {}
    for k, s in pat + llm:
        expect[(k,)] = max(expect.get((k,), 0), s) if (k,) in expect else float(s)
    assert merged == expect
    assert {m.topic_path: m.score for m in merge_max(q, p)} == merged


def test_filter_order_and_ties():
    ms = [
        MergedMatch(("b",), (PageRange(10, 11),), 12.0, frozenset()),
        MergedMatch(("a",), (PageRange(10, 10),), 30.0, frozenset()),
        MergedMatch(("c",), (PageRange(3, 3),), 11.0, frozenset()),
        MergedMatch(("d",), (PageRange(1, 1),), 9.99, frozenset()),
        MergedMatch(("e",), (), 50.0, frozenset()),
    ]
    assert [m.topic_path[0] for m in filter_and_order(ms, 10)] == ["c", "a", "b"]
    with pytest.raises(ValueError):
        filter_and_order(ms, -1)


def test_context_rendering(nav):
    ms = [MergedMatch(("Entropy", "Entropy generation"), (PageRange(958, 962),), 20.0, frozenset()),
          MergedMatch(("Solid(s)", "fugacity of"), (PageRange(320, 320),), 13.0, frozenset()),
          MergedMatch(("Off the end",), (PageRange(2000, 2001),), 13.0, frozenset())]
    ctx = assemble_context(ms, nav, k=5)
    assert ctx.rendered_text == (
        "1. Entropy > Entropy generation (pages 958--962)\n"
        "   Location: Chapter 15, Section 15.7 (Thermodynamic Analysis of Bioreactors)\n"
        "2. Solid(s) > fugacity of (page 320)\n"
        "   Location: Chapter 7, Section 7.4 (The Molar Gibbs Energy and Fugacity of a Pure Component)\n"
        "3. Off the end (pages 2000--2001)\n"
        "   Location: unknown"
    )
    assert len(assemble_context(ms, nav, k=1).entries) == 1
    assert not assemble_context([], nav)
    with pytest.raises(ValueError):
        assemble_context(ms, nav, k=0)


def test_explain_is_json():
    data = json.loads(explain([MergedMatch(("A",), (PageRange(1, 2),), 11.0, frozenset({PATTERN}))]))
    assert data[0]["score"] == 11.0


# -- exhaustive-scorer property -------------------------------------------------------------

WORDS = ["gas", "ideal", "fugacity", "coefficient", "of", "entropy", "non-ideal", "liquid(s)", "phase"]

node = st.fixed_dictionaries({
    "topic": st.lists(st.sampled_from(WORDS), min_size=1, max_size=3).map(" ".join),
    "pages": st.lists(st.integers(1, 120).map(lambda p: [p, p + 2]), max_size=2),
})
tree = st.lists(
    st.tuples(node, st.lists(node, max_size=3)).map(lambda t: {**t[0], "subtopics": t[1]}),
    max_size=16,
)
term_lists = st.lists(
    st.lists(st.sampled_from(WORDS + ["ideal gas", "fugacity coefficient"]), min_size=1, max_size=2).map(" ".join),
    max_size=4,
)


@settings(max_examples=200, deadline=None)
@given(tree, term_lists, st.booleans())
def test_search_equals_exhaustive_scorer(data, terms, llm):
    nav = nav_from_data({"chapters": [{"number": "1", "title": "All", "first_page": 1, "last_page": 130}]})
    idx = index_from_data(data)
    got = {m.key: m.score for m in search_index(TermSet.build(terms, LLM if llm else PATTERN), idx, nav)}
    want = exhaustive_scores(data, terms, llm, 130)
    assert got == {k: float(v) for k, v in want.items()}


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 5000))
def test_page_bonus_matches_exact_arithmetic(first, last):
    assert page_bonus(first, last) == page_bonus_oracle(first, last)
