"""Comment/string-aware scanning over Lean 4 source text.

Token detection here deliberately avoids regexes over raw text: `sorry` in a
line comment, a string literal, or an identifier like `sorryless_lemma` must
never count as the `sorry` tactic. The scanner tracks line comments (`--`),
nested block comments (`/- ... -/`, which also covers doc comments `/--`),
and double-quoted string literals with backslash escapes.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

CODE = "c"
COMMENT = "#"
STRING = "s"


def classify(source: str) -> list[str]:
    """Per-character category: CODE, COMMENT, or STRING."""
    n = len(source)
    cats = [CODE] * n
    i = 0
    block_depth = 0
    while i < n:
        if block_depth > 0:
            if source.startswith("/-", i):
                block_depth += 1
                cats[i] = cats[i + 1] = COMMENT
                i += 2
            elif source.startswith("-/", i):
                block_depth -= 1
                cats[i] = cats[i + 1] = COMMENT
                i += 2
            else:
                cats[i] = COMMENT
                i += 1
            continue
        if source.startswith("--", i):
            end = source.find("\n", i)
            end = n if end == -1 else end
            for j in range(i, end):
                cats[j] = COMMENT
            i = end
            continue
        if source.startswith("/-", i):
            block_depth = 1
            cats[i] = cats[i + 1] = COMMENT
            i += 2
            continue
        if source[i] == '"':
            cats[i] = STRING
            i += 1
            while i < n:
                if source[i] == "\\" and i + 1 < n:
                    cats[i] = cats[i + 1] = STRING
                    i += 2
                elif source[i] == '"':
                    cats[i] = STRING
                    i += 1
                    break
                else:
                    cats[i] = STRING
                    i += 1
            continue
        i += 1
    return cats


def code_mask(source: str) -> list[bool]:
    """Per-character mask: True where the character is code (not comment/string)."""
    return [c == CODE for c in classify(source)]


def strip_comments(source: str) -> str:
    """Replace comment text with spaces (newlines kept so positions survive)."""
    cats = classify(source)
    return "".join(
        ch if cat != COMMENT or ch == "\n" else " "
        for ch, cat in zip(source, cats)
    )


def line_starts(source: str) -> list[int]:
    starts = [0]
    for idx, ch in enumerate(source):
        if ch == "\n":
            starts.append(idx + 1)
    return starts


def position_of(starts: list[int], offset: int) -> tuple[int, int]:
    """(1-based line, 0-based column) of a character offset."""
    row = bisect.bisect_right(starts, offset) - 1
    return row + 1, offset - starts[row]


def is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_'"


_is_ident_char = is_ident_char


@dataclass(frozen=True)
class TokenHit:
    token: str
    line: int
    column: int
    start: int
    end: int


def _boundary_ok(source: str, start: int, end: int, token: str) -> bool:
    prev = source[start - 1] if start > 0 else ""
    nxt = source[end] if end < len(source) else ""
    if prev and (_is_ident_char(prev) or prev == "`"):
        return False
    if prev == "#" and not token.startswith("#"):
        return False
    if token == "axiom" and prev == ".":
        return False
    if nxt and _is_ident_char(nxt):
        return False
    return True


def scan_tokens(source: str, tokens: tuple[str, ...]) -> list[TokenHit]:
    """All code-position occurrences of the given tokens, in source order."""
    mask = code_mask(source)
    starts = line_starts(source)
    ordered = sorted(set(tokens), key=len, reverse=True)
    hits: list[TokenHit] = []
    i = 0
    n = len(source)
    while i < n:
        if not mask[i]:
            i += 1
            continue
        matched = False
        for tok in ordered:
            end = i + len(tok)
            if not source.startswith(tok, i):
                continue
            if not all(mask[i:end]):
                continue
            if not _boundary_ok(source, i, end, tok):
                continue
            line, col = position_of(starts, i)
            hits.append(TokenHit(tok, line, col, i, end))
            i = end
            matched = True
            break
        if not matched:
            i += 1
    return hits


def remove_spans(source: str, spans: list[tuple[int, int]]) -> str:
    """Source with the given (start, end) spans deleted."""
    if not spans:
        return source
    parts = []
    cursor = 0
    for start, end in sorted(spans):
        parts.append(source[cursor:start])
        cursor = end
    parts.append(source[cursor:])
    return "".join(parts)
