import time

import pytest

from conftest import FUGACITY_LLM_REPLY, dead_url
from lectern.bookindex import PageRange, PageContext
from lectern.llm import GatewayConfig, LlmGateway
from lectern.query import QueryEngine
from lectern.retrieval import ContextBlock, ContextEntry
from lectern.synthesis import (
    FALLBACK_MODE,
    LLM_MODE,
    NO_MATCH_TEXT,
    SYSTEM_PROMPT,
    extract_references,
    fallback_answer,
    synthesize,
)

S74 = PageContext("7", "Fugacity of Pure Species", "7.4", "The Molar Gibbs Energy and Fugacity of a Pure Component")
S92 = PageContext("9", "Phase Equilibria II", "9.2", "The Partial Molar Gibbs Energy and Fugacity")
CTX = ContextBlock((
    ContextEntry(1, ("Peng-Robinson equation of state", "fugacity coefficient from"),
                 (PageRange(314, 317), PageRange(440, 442)), S74),
    ContextEntry(2, ("Solid(s)", "fugacity of"), (PageRange(320, 320),), S74),
    ContextEntry(3, ("Phase equilibrium", "fugacity in"), (PageRange(424, 425),), S92),
))


def test_fallback_template():
    ans = fallback_answer(CTX)
    assert ans.text == 'Check out "Peng-Robinson equation of state > fugacity coefficient from" on pages 314--317, 440--442.'
    assert ans.mode == FALLBACK_MODE


def test_fallback_single_page():
    ans = fallback_answer(ContextBlock(CTX.entries[1:2]))
    assert ans.text == 'Check out "Solid(s) > fugacity of" on page 320.'


def test_empty_context_never_calls_model(mock_server, gateway_for):
    srv = mock_server(lambda b: "should not be used")
    ans = synthesize("anything", ContextBlock(), gateway_for(srv))
    assert ans.text == NO_MATCH_TEXT and srv.requests == []


def test_llm_answer_with_verified_references(mock_server, gateway_for):
    reply = ("Fugacity measures escaping tendency. See Chapter 7, Section 7.4, pages 314--317 for the "
             "Peng-Robinson route, and Section 9.2 (pages 424--425) for phase equilibrium.\n\n"
             "References:\nsomething the model made up")
    srv = mock_server(lambda b: reply)
    ans = synthesize("Explain fugacity.", CTX, gateway_for(srv))
    assert ans.mode == LLM_MODE
    assert "made up" not in ans.text
    topics = [r.topic for r in ans.references]
    assert topics[0] == "Peng-Robinson equation of state > fugacity coefficient from"
    assert "Phase equilibrium > fugacity in" in topics
    assert ans.unverified_citations == ()
    assert ans.text.endswith("Phase equilibrium > fugacity in: pages 424--425 in Chapter 9, Section 9.2.")
    req = srv.requests[0]
    assert req["system"] == SYSTEM_PROMPT
    assert "Location: Chapter 7, Section 7.4" in req["prompt"]
    assert req["options"]["temperature"] == 0.6


def test_invented_citations_are_flagged():
    refs, unverified = extract_references("See Section 3.2 and Chapter 12, page 999.", CTX)
    assert refs == ()
    assert unverified == ("Chapter 12", "Section 3.2", "page 999")


def test_no_detectable_citation_references_whole_context(mock_server, gateway_for):
    srv = mock_server(lambda b: "It is a corrected pressure.")
    ans = synthesize("q", CTX, gateway_for(srv))
    assert len(ans.references) == 3


def test_model_failure_falls_back(mock_server, gateway_for):
    srv = mock_server([(500, "{}"), (500, "{}")])
    ans = synthesize("q", CTX, gateway_for(srv))
    assert ans.mode == FALLBACK_MODE


# -- end-to-end engine --------------------------------------------------------------------------


def route(synthesis_reply):
    """Mock responder: term extraction in JSON mode, synthesis in plain mode."""
    def respond(body):
        return FUGACITY_LLM_REPLY if body.get("format") == "json" else synthesis_reply
    return respond


def test_engine_pattern_only(index, nav, lexicon):
    res = QueryEngine(index, nav, lexicon).ask("Explain fugacity.")
    assert res.llm_terms is None
    assert res.answer.mode == FALLBACK_MODE
    assert res.answer.text.startswith('Check out "Peng-Robinson equation of state > fugacity coefficient from"')


def test_engine_dual_path(index, nav, lexicon, mock_server, gateway_for):
    srv = mock_server(route("See pages 314--317."))
    res = QueryEngine(index, nav, lexicon, gateway_for(srv)).ask("Explain fugacity.")
    assert res.llm_terms.expanded
    assert res.answer.mode == LLM_MODE
    assert [e.topic_path[0] for e in res.context.entries] == [
        "Peng-Robinson equation of state", "Corresponding states", "Liquid(s)", "Solid(s)", "Phase equilibrium"]
    assert res.warnings == []


def test_engine_server_down_skips_synthesis(index, nav, lexicon):
    with LlmGateway(GatewayConfig(base_url=dead_url(), request_timeout=2, retry_count=0)) as gw:
        res = QueryEngine(index, nav, lexicon, gw).ask("Explain fugacity.")
    assert res.answer.mode == FALLBACK_MODE
    assert any("fallback" in w for w in res.warnings)


def test_engine_llm_timeout_does_not_block(index, nav, lexicon, mock_server, gateway_for):
    # synthesis shares the single lane, so it queues behind the stale extraction
    def slow(body):
        if body.get("format") == "json":
            time.sleep(1.0)
            return FUGACITY_LLM_REPLY
        return "plain answer citing page 320"

    srv = mock_server(slow)
    engine = QueryEngine(index, nav, lexicon, gateway_for(srv), llm_timeout=0.2)
    res = engine.ask("Explain fugacity.")
    assert res.llm_terms is None
    assert any("timed out" in w for w in res.warnings)
    assert res.context.entries


def test_engine_no_match(index, nav, lexicon):
    res = QueryEngine(index, nav, lexicon).ask("What is the meaning of life?")
    assert res.answer.text == NO_MATCH_TEXT
