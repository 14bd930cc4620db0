"""HTTP client wire-format shaping against a stubbed transport."""

import json

import pytest

from proofloop.core import Message
from proofloop.llm import HttpLLM, LLMTransportError, LLMUnavailable
from proofloop.toolbox import HttpWebSearch, ToolUnavailable


class StubResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            import requests

            raise requests.HTTPError(f"{self.status_code}")


class StubSession:
    def __init__(self, response):
        self.response = response
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        return self.response


def reply_payload(content="{}", tool_calls=None):
    message = {"content": content}
    if tool_calls:
        message["tool_calls"] = tool_calls
    return {
        "choices": [{"message": message}],
        "usage": {
            "prompt_tokens": 11,
            "completion_tokens": 7,
            "completion_tokens_details": {"reasoning_tokens": 3},
        },
    }


def test_payload_includes_model_tools_and_thinking(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k-123")
    session = StubSession(StubResponse(payload=reply_payload()))
    client = HttpLLM("https://llm.example/v1", api_key_env="TEST_LLM_KEY", session=session)
    reply = client.complete(
        [Message("system", "s"), Message("user", "u"), Message("tool", "result text")],
        tools=("library_search",),
        model="prover-large",
        thinking_budget=32_000,
        seed=5,
    )
    [request] = session.requests
    assert request["url"] == "https://llm.example/v1/chat/completions"
    assert request["headers"]["Authorization"] == "Bearer k-123"
    body = request["json"]
    assert body["model"] == "prover-large"
    assert body["thinking_budget"] == 32_000
    assert body["seed"] == 5
    assert body["response_format"] == {"type": "json_object"}
    assert [t["function"]["name"] for t in body["tools"]] == ["library_search"]
    # tool-role messages travel as user turns on this wire format
    assert body["messages"][2]["role"] == "user"
    assert body["messages"][2]["content"].startswith("Tool result:")
    assert (reply.tokens_in, reply.tokens_out, reply.tokens_thinking) == (11, 7, 3)


def test_provider_tool_calls_are_parsed(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    calls = [{"function": {"name": "web_search", "arguments": json.dumps({"query": "q"})}}]
    session = StubSession(StubResponse(payload=reply_payload(content=None, tool_calls=calls)))
    client = HttpLLM("https://llm.example", api_key_env="TEST_LLM_KEY", session=session)
    reply = client.complete([Message("user", "u")])
    assert reply.text == ""
    assert reply.tool_calls[0].tool == "web_search"
    assert reply.tool_calls[0].arguments == {"query": "q"}


def test_missing_api_key_is_unavailable(monkeypatch):
    monkeypatch.delenv("TEST_LLM_KEY", raising=False)
    client = HttpLLM("https://llm.example", api_key_env="TEST_LLM_KEY", session=StubSession(None))
    with pytest.raises(LLMUnavailable, match="TEST_LLM_KEY"):
        client.complete([Message("user", "u")])


def test_5xx_is_transport_error_and_4xx_is_final(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    client = HttpLLM("https://llm.example", api_key_env="TEST_LLM_KEY",
                     session=StubSession(StubResponse(status_code=503)))
    with pytest.raises(LLMTransportError):
        client.complete([Message("user", "u")])
    client = HttpLLM("https://llm.example", api_key_env="TEST_LLM_KEY",
                     session=StubSession(StubResponse(status_code=401)))
    with pytest.raises(LLMUnavailable):
        client.complete([Message("user", "u")])


def test_web_search_normalizes_and_caps_snippets(monkeypatch):
    monkeypatch.setenv("TEST_TAVILY_KEY", "k")
    payload = {
        "results": [
            {"title": "T1", "url": "https://a.example", "content": "x" * 900},
            {"title": "T2", "url": "https://b.example", "content": "short"},
            {"title": "bad", "content": "no url"},
        ]
    }
    session = StubSession(StubResponse(payload=payload))
    client = HttpWebSearch(api_key_env="TEST_TAVILY_KEY", session=session, max_results=5)
    hits = client.search("query")
    assert [h.url for h in hits] == ["https://a.example", "https://b.example"]
    assert len(hits[0].snippet) == 500
    [request] = session.requests
    assert request["json"]["query"] == "query"


def test_web_search_missing_key(monkeypatch):
    monkeypatch.delenv("TEST_TAVILY_KEY", raising=False)
    client = HttpWebSearch(api_key_env="TEST_TAVILY_KEY", session=StubSession(None))
    with pytest.raises(ToolUnavailable):
        client.search("q")
