"""Deterministic approximate token counting used for budgets and stats."""

from __future__ import annotations

import re
from typing import Callable

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

TokenCounter = Callable[[str], int]


def tokenize(text: str) -> list[str]:
    """Word runs and single punctuation characters; whitespace is dropped."""
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    return sum(1 for _ in _TOKEN_RE.finditer(text))


def identifiers(text: str) -> list[str]:
    return _IDENT_RE.findall(text)
