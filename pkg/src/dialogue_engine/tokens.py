"""Reference tokenizer for prompt cost accounting.

The counts feed the per-section cost metrics, so the only hard requirement
is determinism. The rule: split on Unicode whitespace, then peel leading
and trailing punctuation runs off each chunk as their own tokens. A
model-exact tokenizer can be plugged in anywhere a `Tokenizer` is accepted.
"""

from __future__ import annotations

import unicodedata
from typing import Callable, List

Tokenizer = Callable[[str], List[str]]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def reference_tokenize(text: str) -> List[str]:
    """Split `text` into tokens: whitespace-separated chunks, with leading and
    trailing punctuation runs split off as separate tokens."""
    tokens: List[str] = []
    for chunk in text.split():
        i = 0
        while i < len(chunk) and _is_punct(chunk[i]):
            i += 1
        j = len(chunk)
        while j > i and _is_punct(chunk[j - 1]):
            j -= 1
        if i > 0:
            tokens.append(chunk[:i])
        if j > i:
            tokens.append(chunk[i:j])
        if j < len(chunk):
            tokens.append(chunk[j:])
    return tokens


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Deterministic token count of `text` under the given (or reference) tokenizer."""
    tok = tokenizer if tokenizer is not None else reference_tokenize
    return len(tok(text))
