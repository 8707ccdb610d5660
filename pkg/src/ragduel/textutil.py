"""Shared tokenizer and hash primitives.

The same tokenization (lowercase, split on non-alphanumerics) backs the
keyword index, the mock embedder, and token-overlap scoring, so they are
defined once here.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def fnv1a64(token: str) -> int:
    """FNV-1a 64-bit hash of the token's UTF-8 bytes."""
    value = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK64
    return value
