"""Output cache: exact-key LRU with TTL plus a prompt-token inverted index.

Cache keys are digests of canonicalized requests, so requests differing
only in param order, float noise past 3 decimals, or surrounding prompt
whitespace share one entry. Similar-prompt lookup is advisory only and
never substitutes for a hit.
"""

from __future__ import annotations

import base64
import json
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .canon import doc_digest, jaccard, token_set
from .errors import MissingField, OutputTooLarge, ParseError

DEFAULT_ENTRY_CAP = 1024 * 1024


@dataclass(frozen=True)
class CanonicalRequest:
    model_name: str
    model_version: int
    prompt: str
    params: tuple[tuple[str, object], ...] = ()

    def to_doc(self) -> dict:
        return {
            "model_name": self.model_name,
            "model_version": self.model_version,
            "params": dict(self.params),
            "prompt": self.prompt,
        }

    @property
    def key(self) -> str:
        return doc_digest(self.to_doc())

    @property
    def prompt_tokens(self) -> frozenset[str]:
        return token_set(self.prompt)


def _canonical_param(name: str, value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return round(value, 3)
    raise ParseError(f"param {name!r} is not a scalar")


def normalize_request(raw: dict) -> CanonicalRequest:
    """Idempotent canonical form: trimmed prompt, sorted 3-decimal params."""
    for field in ("model_name", "model_version", "prompt"):
        if field not in raw:
            raise MissingField(field)
    params = raw.get("params") or {}
    canon_params = tuple(sorted((str(k), _canonical_param(k, v)) for k, v in params.items()))
    return CanonicalRequest(
        model_name=str(raw["model_name"]),
        model_version=int(raw["model_version"]),
        prompt=str(raw["prompt"]).strip(),
        params=canon_params,
    )


@dataclass
class CacheEntry:
    key: str
    request: CanonicalRequest
    output: bytes
    created_at: int
    last_access: int
    access_count: int = 0
    ttl_ms: int | None = None

    def expired(self, now: int) -> bool:
        return self.ttl_ms is not None and self.created_at + self.ttl_ms < now


class OutputCache:
    """Single-writer LRU cache of model outputs with lazy TTL expiry."""

    def __init__(self, capacity: int, entry_cap_bytes: int = DEFAULT_ENTRY_CAP):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entry_cap_bytes = entry_cap_bytes
        self._entries: OrderedDict[str, CacheEntry] = OrderedDict()
        self._postings: dict[str, set[str]] = {}
        self._lock = threading.RLock()
        self.hit_count = 0
        self.miss_count = 0

    def __len__(self) -> int:
        return len(self._entries)

    def resident_keys(self) -> list[str]:
        """Keys from least to most recently used."""
        return list(self._entries)

    # -- index maintenance ----------------------------------------------

    def _index_add(self, entry: CacheEntry):
        for token in entry.request.prompt_tokens:
            self._postings.setdefault(token, set()).add(entry.key)

    def _index_remove(self, entry: CacheEntry):
        for token in entry.request.prompt_tokens:
            keys = self._postings.get(token)
            if keys is None:
                continue
            keys.discard(entry.key)
            if not keys:
                del self._postings[token]

    def _drop(self, key: str) -> CacheEntry:
        entry = self._entries.pop(key)
        self._index_remove(entry)
        return entry

    # -- operations -------------------------------------------------------

    def put(self, request: CanonicalRequest, output: bytes,
            ttl_ms: int | None = None, now: int = 0) -> str:
        if len(output) > self.entry_cap_bytes:
            raise OutputTooLarge(f"output of {len(output)} bytes exceeds {self.entry_cap_bytes}")
        key = request.key
        with self._lock:
            existing = self._entries.get(key)
            if existing is not None:
                existing.output = output
                existing.ttl_ms = ttl_ms
                existing.created_at = now
                existing.last_access = now
                self._entries.move_to_end(key)
                return key
            if len(self._entries) >= self.capacity:
                lru_key = next(iter(self._entries))
                self._drop(lru_key)
            entry = CacheEntry(key=key, request=request, output=output,
                               created_at=now, last_access=now, ttl_ms=ttl_ms)
            self._entries[key] = entry
            self._index_add(entry)
        return key

    def get(self, request: CanonicalRequest, now: int) -> bytes | None:
        """Stored output on a hit; None is a MISS."""
        key = request.key
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                self.miss_count += 1
                return None
            if entry.expired(now):
                self._drop(key)
                self.miss_count += 1
                return None
            entry.last_access = now
            entry.access_count += 1
            self._entries.move_to_end(key)
            self.hit_count += 1
            return entry.output

    def peek(self, key: str) -> CacheEntry | None:
        return self._entries.get(key)

    def similar_lookup(self, request: CanonicalRequest, threshold: float,
                       k: int) -> list[tuple[str, float]]:
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must be in [0,1]")
        query_tokens = request.prompt_tokens
        with self._lock:
            if threshold > 0.0 and query_tokens:
                candidates = set()
                for token in query_tokens:
                    candidates |= self._postings.get(token, set())
            else:
                candidates = set(self._entries)
            scored = []
            for key in candidates:
                entry = self._entries[key]
                if entry.request.model_name != request.model_name:
                    continue
                similarity = jaccard(query_tokens, entry.request.prompt_tokens)
                if similarity >= threshold:
                    scored.append((key, similarity))
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:k]

    def sweep(self, now: int) -> int:
        """Eagerly remove expired entries; the gateway runs this on a cadence."""
        with self._lock:
            stale = [k for k, e in self._entries.items() if e.expired(now)]
            for key in stale:
                self._drop(key)
        return len(stale)

    def index_tokens(self) -> dict[str, set[str]]:
        return {t: set(keys) for t, keys in self._postings.items()}

    # -- warm-up ----------------------------------------------------------

    def load_warmup(self, path: str | Path, now: int = 0) -> int:
        """Bulk-load records of {output_base64, request, ttl_ms}, one per line."""
        count = 0
        for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            request = normalize_request(doc["request"])
            output = base64.b64decode(doc["output_base64"])
            ttl = doc.get("ttl_ms")
            self.put(request, output, ttl_ms=ttl, now=now)
            count += 1
        return count
