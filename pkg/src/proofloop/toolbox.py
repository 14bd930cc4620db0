"""Agent tools: Mathlib premise search and web search, each with a mock.

Tool failures never escape ``Toolbox.dispatch``: they are rendered as error
text in the tool-result message so an attempt loop can always continue.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .core import ProofLoopError, ToolCallRequest

DEFAULT_LIMIT = 10
SNIPPET_CAP = 500


class ToolUnavailable(ProofLoopError):
    pass


@dataclass(frozen=True)
class PremiseHit:
    name: str
    statement: str
    score: float
    module: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("premise scores live in [0, 1]")


@dataclass(frozen=True)
class WebHit:
    title: str
    url: str
    snippet: str

    def __post_init__(self) -> None:
        if not re.match(r"^[a-z][a-z0-9+.-]*://", self.url):
            raise ValueError(f"malformed url {self.url!r}")


def render_premises(hits: Sequence[PremiseHit]) -> str:
    if not hits:
        return "(no results)"
    return "\n".join(f"{h.name} : {h.statement}" for h in hits)


def render_web_hits(hits: Sequence[WebHit]) -> str:
    if not hits:
        return "(no results)"
    return "\n\n".join(f"{h.title} — {h.url}\n{h.snippet}" for h in hits)


# ---------------------------------------------------------------------------
# Library search


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[A-Za-z0-9_]+", text.lower()))


class MockLibrarySearch:
    """Deterministic in-memory premise index.

    Scoring: a whitespace-normalized substring match of the query inside a
    statement scores 1.0; otherwise the fraction of query tokens present in
    the entry's name+statement. Zero-score entries are dropped.
    """

    def __init__(self, table: Sequence[tuple[str, str, str]] | None = None):
        self.table = list(table if table is not None else DEFAULT_PREMISE_TABLE)

    def search(self, query: str, limit: int = DEFAULT_LIMIT) -> list[PremiseHit]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        needle = " ".join(query.split())
        q_tokens = _tokens(query)
        hits = []
        for name, statement, module in self.table:
            haystack = " ".join(statement.split())
            if needle and needle in haystack:
                score = 1.0
            elif q_tokens:
                score = len(q_tokens & _tokens(f"{name} {statement}")) / len(q_tokens)
            else:
                score = 0.0
            if score > 0.0:
                hits.append(PremiseHit(name, statement, round(score, 6), module))
        hits.sort(key=lambda h: (-h.score, h.name))
        return hits[:limit]

    @classmethod
    def from_file(cls, path: str | Path) -> "MockLibrarySearch":
        data = json.loads(Path(path).read_text())
        return cls([(e["name"], e["statement"], e.get("module", "")) for e in data])


DEFAULT_PREMISE_TABLE: tuple[tuple[str, str, str], ...] = (
    ("Nat.add_zero", "∀ (n : ℕ), n + 0 = n", "Mathlib.Algebra.Group.Nat"),
    ("Nat.zero_add", "∀ (n : ℕ), 0 + n = n", "Mathlib.Algebra.Group.Nat"),
    ("Nat.add_comm", "∀ (n m : ℕ), n + m = m + n", "Mathlib.Algebra.Group.Nat"),
    ("Nat.add_assoc", "∀ (n m k : ℕ), n + m + k = n + (m + k)", "Mathlib.Algebra.Group.Nat"),
    ("Nat.succ_add", "∀ (n m : ℕ), n.succ + m = (n + m).succ", "Mathlib.Data.Nat.Basic"),
    ("Nat.add_succ", "∀ (n m : ℕ), n + m.succ = (n + m).succ", "Mathlib.Data.Nat.Basic"),
    ("Nat.mul_one", "∀ (n : ℕ), n * 1 = n", "Mathlib.Algebra.Group.Nat"),
    ("Nat.one_mul", "∀ (n : ℕ), 1 * n = n", "Mathlib.Algebra.Group.Nat"),
    ("Nat.le_refl", "∀ (n : ℕ), n ≤ n", "Mathlib.Order.Basic"),
    ("Nat.lt_irrefl", "∀ (n : ℕ), ¬n < n", "Mathlib.Order.Basic"),
)


class HttpLibrarySearch:
    """Client for a premise-selection service.

    Wire format (ours; documented in the README): POST ``{base_url}/search``
    with ``{"query": str, "limit": int}``; the response is a JSON list of
    ``{"name", "statement", "score", "module"}`` objects sorted by score.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def search(self, query: str, limit: int = DEFAULT_LIMIT) -> list[PremiseHit]:
        try:
            response = self._session.post(
                f"{self.base_url}/search",
                json={"query": query, "limit": limit},
                timeout=self.timeout,
            )
            response.raise_for_status()
            data = response.json()
            hits = [
                PremiseHit(
                    name=str(e["name"]),
                    statement=str(e.get("statement", "")),
                    score=min(max(float(e.get("score", 0.0)), 0.0), 1.0),
                    module=str(e.get("module", "")),
                )
                for e in data
            ]
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            raise ToolUnavailable(f"library search failed: {exc}") from exc
        hits.sort(key=lambda h: -h.score)
        return hits[:limit]


# ---------------------------------------------------------------------------
# Web search


class MockWebSearch:
    def __init__(self, script: dict[str, Sequence[WebHit]] | None = None):
        self.script = {k: list(v) for k, v in (script or {}).items()}

    def search(self, query: str) -> list[WebHit]:
        if not query:
            raise ValueError("empty query")
        return list(self.script.get(query, []))


class HttpWebSearch:
    """Tavily-style search client; the API key comes from the environment."""

    def __init__(
        self,
        base_url: str = "https://api.tavily.com",
        api_key_env: str = "PROOFLOOP_TAVILY_KEY",
        max_results: int = 5,
        timeout: float = 30.0,
        session=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.max_results = max_results
        self.timeout = timeout
        self._session = session or requests.Session()

    def search(self, query: str) -> list[WebHit]:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ToolUnavailable(f"environment variable {self.api_key_env} is not set")
        try:
            response = self._session.post(
                f"{self.base_url}/search",
                json={"api_key": key, "query": query, "max_results": self.max_results},
                timeout=self.timeout,
            )
            response.raise_for_status()
            results = response.json().get("results", [])
        except (requests.RequestException, ValueError) as exc:
            raise ToolUnavailable(f"web search failed: {exc}") from exc
        hits = []
        for raw in results[: self.max_results]:
            try:
                hits.append(
                    WebHit(
                        title=str(raw.get("title", "")),
                        url=str(raw["url"]),
                        snippet=str(raw.get("content", ""))[:SNIPPET_CAP],
                    )
                )
            except (KeyError, ValueError):
                continue
        return hits


# ---------------------------------------------------------------------------
# Dispatch


class Toolbox:
    """Routes tool-call requests to clients; every failure becomes result text."""

    def __init__(
        self,
        library=None,
        web=None,
        enabled: frozenset[str] | set[str] = frozenset(),
        limit: int = DEFAULT_LIMIT,
        max_results: int = 5,
    ):
        self.library = library
        self.web = web
        self.enabled = frozenset(enabled)
        self.limit = limit
        self.max_results = max_results
        self._lock = threading.Lock()
        self.dispatched: list[ToolCallRequest] = []

    def dispatch(self, request: ToolCallRequest) -> str:
        with self._lock:
            self.dispatched.append(request)
        if request.tool not in ("library_search", "web_search"):
            return f"unknown tool: {request.tool}"
        if request.tool not in self.enabled:
            return f"tool disabled: {request.tool} is not enabled for this run"
        query = request.arguments.get("query", "")
        try:
            if request.tool == "library_search":
                if self.library is None:
                    raise ToolUnavailable("no library search backend configured")
                limit = int(request.arguments.get("limit", self.limit) or self.limit)
                hits = self.library.search(query, limit=min(limit, self.limit))
                body = render_premises(hits)
            else:
                if self.web is None:
                    raise ToolUnavailable("no web search backend configured")
                body = render_web_hits(self.web.search(query)[: self.max_results])
        except Exception as exc:  # tool faults must never kill the loop
            return f"tool error ({request.tool}): {exc}"
        return f"{request.tool} results for {query!r}:\n{body}"
