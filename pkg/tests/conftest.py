from __future__ import annotations

import json
from pathlib import Path

import pytest

from lectern.bookindex import parse_index, parse_nav_tree
from lectern.llm import GatewayConfig, LlmGateway
from lectern.mockserver import MockInferenceServer
from lectern.terms import PhraseLexicon

FIXTURES = Path(__file__).parent / "fixtures"
BOOK = FIXTURES / "book"
INDEX_PATH = BOOK / "bindex_tab.json"
NAV_PATH = BOOK / "ftoc_nav_tree.json"
BASELINE_PATH = FIXTURES / "baseline" / "baseline_lecture.json"
CORPUS_DIR = FIXTURES / "corpus"
LECTURE_PATH = FIXTURES / "lecture" / "lecture_009.json"
ASR_DIR = FIXTURES / "asr"

# the expanded term set a model returns for "Explain fugacity."
FUGACITY_LLM_REPLY = json.dumps({
    "terms": ["fugacity"],
    "related": ["fugacity coefficient", "chemical potential", "activity coefficient",
                "ideal gas", "non-ideal gas"],
})


@pytest.fixture(scope="session")
def index():
    return parse_index(INDEX_PATH)


@pytest.fixture(scope="session")
def nav():
    return parse_nav_tree(NAV_PATH)


@pytest.fixture(scope="session")
def lexicon():
    return PhraseLexicon.load()


@pytest.fixture
def mock_server():
    """Factory: ``mock_server(responder_or_script)`` -> started server."""
    started = []

    def make(responder=None):
        srv = MockInferenceServer(responder).start()
        started.append(srv)
        return srv

    yield make
    for srv in started:
        srv.stop()


@pytest.fixture
def gateway_for():
    """Factory: gateway pointed at a mock server, closed after the test."""
    made = []

    def make(srv, **overrides):
        cfg = GatewayConfig(base_url=srv.url, request_timeout=10, **overrides)
        gw = LlmGateway(cfg)
        made.append(gw)
        return gw

    yield make
    for gw in made:
        gw.close()


def dead_url() -> str:
    """A localhost URL with nothing listening."""
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}"


# -- acceptance summary -------------------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
