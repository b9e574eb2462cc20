from __future__ import annotations

import base64
import random

import pytest
from hypothesis import given, settings, strategies as st

from imo.cache import CanonicalRequest, OutputCache, normalize_request
from imo.canon import canonical_json
from imo.errors import MissingField, OutputTooLarge


def req(prompt, model="m", version=1, params=None):
    return normalize_request({
        "model_name": model,
        "model_version": version,
        "prompt": prompt,
        "params": params or {},
    })


class ReferenceLRU:
    """Doubly-linked-list LRU oracle, deliberately naive."""

    class Node:
        __slots__ = ("key", "prev", "next")

        def __init__(self, key):
            self.key = key
            self.prev = None
            self.next = None

    def __init__(self, capacity):
        self.capacity = capacity
        self.head = None  # least recently used
        self.tail = None  # most recently used
        self.nodes = {}

    def _unlink(self, node):
        if node.prev:
            node.prev.next = node.next
        else:
            self.head = node.next
        if node.next:
            node.next.prev = node.prev
        else:
            self.tail = node.prev
        node.prev = node.next = None

    def _push_tail(self, node):
        node.prev = self.tail
        if self.tail:
            self.tail.next = node
        self.tail = node
        if self.head is None:
            self.head = node

    def touch(self, key):
        node = self.nodes[key]
        self._unlink(node)
        self._push_tail(node)

    def put(self, key):
        if key in self.nodes:
            self.touch(key)
            return None
        evicted = None
        if len(self.nodes) >= self.capacity:
            evicted = self.head.key
            self._unlink(self.head)
            del self.nodes[evicted]
        node = self.Node(key)
        self.nodes[key] = node
        self._push_tail(node)
        return evicted

    def get(self, key):
        if key in self.nodes:
            self.touch(key)
            return True
        return False

    def remove(self, key):
        if key in self.nodes:
            self._unlink(self.nodes[key])
            del self.nodes[key]

    def order(self):
        out = []
        node = self.head
        while node:
            out.append(node.key)
            node = node.next
        return out


class TestNormalize:
    def test_whitespace_trimmed(self):
        assert req("  hi  ") == req("hi")

    def test_param_rounding(self):
        assert req("p", params={"t": 0.70001}) == req("p", params={"t": 0.7})

    def test_key_order_irrelevant(self):
        a = normalize_request({"model_name": "m", "model_version": 1,
                               "prompt": "p", "params": {"a": 1, "b": 2}})
        b = normalize_request({"params": {"b": 2, "a": 1}, "prompt": "p",
                               "model_version": 1, "model_name": "m"})
        assert a == b and a.key == b.key

    def test_missing_field(self):
        with pytest.raises(MissingField):
            normalize_request({"model_version": 1, "prompt": "p"})

    def test_idempotent(self):
        once = req("  spaced  out  ", params={"x": 1.23456})
        again = normalize_request(once.to_doc())
        assert once == again


class TestPutGet:
    def test_lru_eviction_shape(self):
        cache = OutputCache(capacity=2)
        k1, k2, k3 = req("one"), req("two"), req("three")
        cache.put(k1, b"1", now=1)
        cache.put(k2, b"2", now=2)
        assert cache.get(k1, now=3) == b"1"
        cache.put(k3, b"3", now=4)
        assert cache.get(k2, now=5) is None  # evicted
        assert cache.get(k1, now=6) == b"1"
        assert cache.get(k3, now=7) == b"3"

    def test_overwrite_preserves_access_count(self):
        cache = OutputCache(capacity=2)
        r = req("one")
        cache.put(r, b"old", now=1)
        cache.get(r, now=2)
        cache.get(r, now=3)
        key = cache.put(r, b"new", now=4)
        entry = cache.peek(key)
        assert entry.output == b"new"
        assert entry.access_count == 2
        assert len(cache) == 1

    def test_output_too_large(self):
        cache = OutputCache(capacity=2, entry_cap_bytes=8)
        with pytest.raises(OutputTooLarge):
            cache.put(req("big"), b"x" * 9, now=1)

    def test_hit_updates_metadata(self):
        cache = OutputCache(capacity=2)
        r = req("one")
        key = cache.put(r, b"1", now=10)
        assert cache.get(r, now=25) == b"1"
        entry = cache.peek(key)
        assert entry.last_access == 25
        assert entry.access_count == 1

    def test_ttl_boundary_exact(self):
        cache = OutputCache(capacity=2)
        r = req("fleeting")
        cache.put(r, b"1", ttl_ms=1000, now=0)
        assert cache.get(r, now=1000) == b"1"   # created_at + ttl == now: alive
        assert cache.get(r, now=1001) is None   # strictly past: expired
        assert len(cache) == 0

    def test_unseen_is_miss(self):
        cache = OutputCache(capacity=2)
        assert cache.get(req("never"), now=1) is None
        assert cache.miss_count == 1


class TestSimilar:
    def test_hand_computed_jaccard(self):
        cache = OutputCache(capacity=4)
        stored = req("translate this text")
        cache.put(stored, b"out", now=1)
        results = cache.similar_lookup(req("translate this document"), 0.0, 5)
        assert results == [(stored.key, 0.5)]  # overlap 2 of union 4

    def test_identical_prompt_scores_one(self):
        cache = OutputCache(capacity=4)
        stored = req("same words")
        cache.put(stored, b"out", now=1)
        assert cache.similar_lookup(req("same words"), 1.0, 5) == [(stored.key, 1.0)]

    def test_threshold_one_without_identical(self):
        cache = OutputCache(capacity=4)
        cache.put(req("alpha beta"), b"out", now=1)
        assert cache.similar_lookup(req("alpha gamma"), 1.0, 5) == []

    def test_model_name_restriction(self):
        cache = OutputCache(capacity=4)
        cache.put(req("shared words", model="other"), b"out", now=1)
        assert cache.similar_lookup(req("shared words", model="mine"), 0.0, 5) == []


class TestIndexConsistency:
    def assert_index_consistent(self, cache):
        postings = cache.index_tokens()
        resident = {key: cache.peek(key) for key in cache.resident_keys()}
        for key, entry in resident.items():
            for token in entry.request.prompt_tokens:
                assert key in postings.get(token, set())
        for token, keys in postings.items():
            for key in keys:
                assert key in resident
                assert token in resident[key].request.prompt_tokens

    def test_eviction_prunes_postings(self):
        cache = OutputCache(capacity=2)
        cache.put(req("alpha beta"), b"1", now=1)
        cache.put(req("beta gamma"), b"2", now=2)
        cache.put(req("gamma delta"), b"3", now=3)
        self.assert_index_consistent(cache)

    def test_expiry_prunes_postings(self):
        cache = OutputCache(capacity=4)
        r = req("short lived tokens")
        cache.put(r, b"1", ttl_ms=5, now=0)
        cache.get(r, now=100)
        self.assert_index_consistent(cache)
        assert cache.index_tokens() == {}

    def test_sweep(self):
        cache = OutputCache(capacity=8)
        cache.put(req("a"), b"1", ttl_ms=10, now=0)
        cache.put(req("b"), b"2", ttl_ms=10, now=0)
        cache.put(req("c"), b"3", now=0)
        assert cache.sweep(now=11) == 2
        assert len(cache) == 1


class TestOracleConformance:
    def run_sequence(self, ops, capacity):
        cache = OutputCache(capacity=capacity)
        oracle = ReferenceLRU(capacity)
        gets = 0
        prompts = {}
        for op, idx, now in ops:
            r = prompts.setdefault(idx, req(f"prompt number {idx}"))
            if op == "put":
                cache.put(r, f"out{idx}".encode(), now=now)
                oracle.put(r.key)
            else:
                gets += 1
                hit = cache.get(r, now=now)
                if hit is not None:
                    oracle.get(r.key)
                else:
                    oracle.remove(r.key)  # TTL-free here, so only misses on absent
            assert len(cache) <= capacity
            assert cache.resident_keys() == oracle.order()
        assert cache.hit_count + cache.miss_count == gets

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["put", "get"]),
                              st.integers(min_value=0, max_value=12),
                              st.integers(min_value=0, max_value=10 ** 6)),
                    max_size=60))
    def test_random_sequences_match_oracle(self, ops):
        self.run_sequence(ops, capacity=4)

    def test_long_random_sequence(self):
        rng = random.Random(20240817)
        ops = [(rng.choice(["put", "get"]), rng.randrange(30), i)
               for i in range(5000)]
        self.run_sequence(ops, capacity=8)


class TestWarmup:
    def test_load_warmup_file(self, tmp_path):
        lines = []
        for i in range(3):
            record = {
                "output_base64": base64.b64encode(f"warm{i}".encode()).decode(),
                "request": {"model_name": "m", "model_version": 1,
                            "prompt": f"warm prompt {i}", "params": {}},
                "ttl_ms": None,
            }
            lines.append(canonical_json(record))
        path = tmp_path / "warm.jsonl"
        path.write_text("\n".join(lines) + "\n", "utf-8")
        cache = OutputCache(capacity=8)
        assert cache.load_warmup(path, now=5) == 3
        assert cache.get(req("warm prompt 1"), now=6) == b"warm1"
