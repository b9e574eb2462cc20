"""Canonical document form and digest helpers.

Every on-disk and on-wire document in this project is UTF-8, key-sorted
JSON so that digests of equal content are stable regardless of field
order or producer.
"""

from __future__ import annotations

import hashlib
import json
import re

ZERO_HASH = "0" * 64

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")


def doc_digest(obj) -> str:
    """SHA-256 of the canonical serialization of ``obj``."""
    return sha256_hex(canonical_bytes(obj))


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; everything else is a separator."""
    return _TOKEN_RE.findall(text.lower())


def token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """Token-set overlap; two empty sets count as identical."""
    if not a and not b:
        return 1.0
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union
