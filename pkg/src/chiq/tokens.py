"""Whitespace-token budgets.

Token budgets throughout the toolkit are counted on whitespace tokens, an
approximation of model tokens that keeps the artifact independent of any
particular tokenizer vocabulary.
"""

from __future__ import annotations

import re

_TOKEN = re.compile(r"\S+")


def count_tokens(text: str) -> int:
    return len(_TOKEN.findall(text))


def keep_first_tokens(text: str, limit: int) -> str:
    """Truncate to the first `limit` whitespace tokens, preserving layout."""
    if limit < 0:
        raise ValueError("token limit must be >= 0")
    spans = [m.span() for m in _TOKEN.finditer(text)]
    if len(spans) <= limit:
        return text
    if limit == 0:
        return ""
    return text[: spans[limit - 1][1]]


def keep_last_tokens(text: str, limit: int) -> str:
    """Truncate from the front, keeping the last `limit` tokens and the
    original layout of the surviving suffix."""
    if limit < 0:
        raise ValueError("token limit must be >= 0")
    spans = [m.span() for m in _TOKEN.finditer(text)]
    if len(spans) <= limit:
        return text
    if limit == 0:
        return ""
    return text[spans[-limit][0] :]
