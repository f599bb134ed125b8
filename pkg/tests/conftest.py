import json

import httpx
import pytest

from prodpeers import data_path
from prodpeers.corpus import load_corpus
from prodpeers.extractors import load_results


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(data_path("companies13.jsonl"))


@pytest.fixture(scope="session")
def by_id(corpus):
    return {doc.page_id: doc for doc in corpus}


@pytest.fixture(scope="session")
def universe():
    return load_results(data_path("universe_fixture.jsonl"))


@pytest.fixture
def no_network(monkeypatch):
    """Fail loudly if anything tries to send an HTTP request."""
    calls = []

    def refuse(self, request, *args, **kwargs):
        calls.append(str(request.url))
        raise AssertionError(f"unexpected network call to {request.url}")

    monkeypatch.setattr(httpx.Client, "send", refuse)
    return calls


def chat_body(content: str) -> dict:
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


# Acceptance criteria record one line each; they are echoed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
