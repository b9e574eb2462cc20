"""Timestamped memory stream with recency/importance/relevance retrieval.

Retrieval scores each record as a weighted mean of an hourly exponential
decay since last access, importance scaled to [0,1], and prompt-token
Jaccard relevance. Reflection folds recent records into one synthesized
high-importance record once their summed importance crosses a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canon import token_set, jaccard
from .errors import ImportanceOutOfRange, ValidationError

MS_PER_HOUR = 3_600_000
REFLECTION_THRESHOLD = 150


@dataclass(frozen=True)
class RetrievalWeights:
    alpha: float = 1.0   # recency
    beta: float = 1.0    # importance
    gamma: float = 1.0   # relevance
    decay: float = 0.995  # per hour since last access

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValidationError("retrieval weights must be non-negative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValidationError("at least one retrieval weight must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ValidationError("decay must lie in (0,1)")


@dataclass
class MemoryRecord:
    text: str
    created_at: int
    last_access: int
    importance: int
    tokens: frozenset[str] = field(default_factory=frozenset)

    def to_doc(self) -> dict:
        return {
            "created_at": self.created_at,
            "importance": self.importance,
            "last_access": self.last_access,
            "text": self.text,
        }


def default_synthesizer(top_records: list[MemoryRecord]) -> tuple[str, int]:
    text = "reflection: " + "; ".join(r.text for r in top_records)
    return text, max(r.importance for r in top_records)


class MemoryStream:
    """Append-ordered record list; single-writer contract per stream."""

    def __init__(self, synthesizer=default_synthesizer):
        self.records: list[MemoryRecord] = []
        self.synthesizer = synthesizer
        self._reflection_mark = 0

    def __len__(self) -> int:
        return len(self.records)

    def add(self, text: str, importance: int, now: int) -> MemoryRecord:
        if not isinstance(importance, int) or not 1 <= importance <= 10:
            raise ImportanceOutOfRange(importance)
        if self.records and now < self.records[-1].created_at:
            raise ValidationError("memory stream must be appended in timestamp order")
        record = MemoryRecord(text=text, created_at=now, last_access=now,
                              importance=importance, tokens=token_set(text))
        self.records.append(record)
        return record

    def retrieve(self, query: str, k: int, weights: RetrievalWeights | None = None,
                 now: int = 0) -> list[MemoryRecord]:
        """Top-k by combined score; retrieved records are touched after scoring."""
        if k < 1:
            raise ValidationError("k must be >= 1")
        weights = weights or RetrievalWeights()
        query_tokens = token_set(query)
        total = weights.alpha + weights.beta + weights.gamma
        scored = []
        for index, record in enumerate(self.records):
            hours = max(0, now - record.last_access) / MS_PER_HOUR
            recency = weights.decay ** hours
            relevance = jaccard(query_tokens, record.tokens)
            score = (weights.alpha * recency
                     + weights.beta * record.importance / 10
                     + weights.gamma * relevance) / total
            scored.append((-score, -record.created_at, index, record))
        scored.sort(key=lambda item: item[:3])
        top = [record for *_, record in scored[:k]]
        for record in top:
            record.last_access = now
        return top

    def reflect(self, now: int, threshold: int = REFLECTION_THRESHOLD,
                weights: RetrievalWeights | None = None) -> MemoryRecord | None:
        """Synthesize one record once recent importance reaches the threshold."""
        recent = self.records[self._reflection_mark:]
        if not recent or sum(r.importance for r in recent) < threshold:
            return None
        query = " ".join(r.text for r in recent)
        top = self.retrieve(query, 3, weights or RetrievalWeights(), now)
        text, importance = self.synthesizer(top)
        record = self.add(text, importance, now)
        self._reflection_mark = len(self.records)
        return record
