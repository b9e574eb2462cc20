"""Hash-chained append-only ledger in integer micro-credits.

Each record hashes (index, prev_hash, payload, timestamp); the chain is
persisted one canonical JSON document per line so verification can run
against the raw file. Revenue splits are exact: floor division plus
largest-remainder apportionment, so every distribution conserves to the
micro-credit.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .canon import ZERO_HASH, canonical_json, sha256_hex
from .errors import (
    DuplicateEvent,
    NegativeAmount,
    NoAgreement,
    UnknownAccount,
    ValidationError,
)


@dataclass(frozen=True)
class AccountOpen:
    account: str

    kind = "account_open"

    def to_doc(self):
        return {"account": self.account, "kind": self.kind}


@dataclass(frozen=True)
class Agreement:
    model: str
    designer: str
    provider_share_num: int
    provider_share_den: int
    effective_from: int

    kind = "agreement"

    def to_doc(self):
        return {
            "designer": self.designer,
            "effective_from": self.effective_from,
            "kind": self.kind,
            "model": self.model,
            "provider_share_den": self.provider_share_den,
            "provider_share_num": self.provider_share_num,
        }


@dataclass(frozen=True)
class Contribution:
    account: str
    gpu_seconds: int

    kind = "contribution"

    def to_doc(self):
        return {"account": self.account, "gpu_seconds": self.gpu_seconds, "kind": self.kind}


@dataclass(frozen=True)
class Revenue:
    model: str
    amount_ucr: int

    kind = "revenue"

    def to_doc(self):
        return {"amount_ucr": self.amount_ucr, "kind": self.kind, "model": self.model}


@dataclass(frozen=True)
class Distribution:
    revenue_ref: int
    payouts: tuple[tuple[str, int], ...]

    kind = "distribution"

    def to_doc(self):
        return {
            "kind": self.kind,
            "payouts": {account: amount for account, amount in self.payouts},
            "revenue_ref": self.revenue_ref,
        }


@dataclass(frozen=True)
class Breakthrough:
    task_hash: str
    old_utility: float | None
    new_utility: float
    submitter: str
    reward_ucr: int
    funded_by: str

    kind = "breakthrough"

    def to_doc(self):
        return {
            "funded_by": self.funded_by,
            "kind": self.kind,
            "new_utility": self.new_utility,
            "old_utility": self.old_utility,
            "reward_ucr": self.reward_ucr,
            "submitter": self.submitter,
            "task_hash": self.task_hash,
        }


_PAYLOAD_TYPES = {
    cls.kind: cls
    for cls in (AccountOpen, Agreement, Contribution, Revenue, Distribution, Breakthrough)
}


def payload_from_doc(doc: dict):
    kind = doc.get("kind")
    if kind == "account_open":
        return AccountOpen(account=doc["account"])
    if kind == "agreement":
        return Agreement(model=doc["model"], designer=doc["designer"],
                         provider_share_num=int(doc["provider_share_num"]),
                         provider_share_den=int(doc["provider_share_den"]),
                         effective_from=int(doc["effective_from"]))
    if kind == "contribution":
        return Contribution(account=doc["account"], gpu_seconds=int(doc["gpu_seconds"]))
    if kind == "revenue":
        return Revenue(model=doc["model"], amount_ucr=int(doc["amount_ucr"]))
    if kind == "distribution":
        payouts = tuple(sorted((a, int(v)) for a, v in doc["payouts"].items()))
        return Distribution(revenue_ref=int(doc["revenue_ref"]), payouts=payouts)
    if kind == "breakthrough":
        old = doc["old_utility"]
        return Breakthrough(task_hash=doc["task_hash"],
                            old_utility=None if old is None else float(old),
                            new_utility=float(doc["new_utility"]),
                            submitter=doc["submitter"],
                            reward_ucr=int(doc["reward_ucr"]),
                            funded_by=doc["funded_by"])
    raise ValidationError(f"unknown payload kind: {kind!r}")


@dataclass(frozen=True)
class LedgerRecord:
    index: int
    prev_hash: str
    payload: object
    timestamp: int
    hash: str

    def to_doc(self):
        return {
            "hash": self.hash,
            "index": self.index,
            "payload": self.payload.to_doc(),
            "prev_hash": self.prev_hash,
            "timestamp": self.timestamp,
        }


def record_hash(index: int, prev_hash: str, payload_doc: dict, timestamp: int) -> str:
    body = canonical_json({"index": index, "payload": payload_doc,
                           "prev_hash": prev_hash, "timestamp": timestamp})
    return sha256_hex(body.encode("utf-8"))


def largest_remainder_split(pool: int, shares: dict[str, int]) -> dict[str, int]:
    """Split ``pool`` pro-rata by integer shares; leftovers go one unit at a
    time by descending fractional remainder, ties by account id."""
    total = sum(shares.values())
    if total <= 0:
        return {}
    base = {}
    remainders = []
    for account in sorted(shares):
        quotient, remainder = divmod(pool * shares[account], total)
        base[account] = quotient
        remainders.append((-remainder, account))
    leftover = pool - sum(base.values())
    remainders.sort()
    for _, account in remainders[:leftover]:
        base[account] += 1
    return base


class Ledger:
    """Append-only chain with a write lock; reads see consistent snapshots."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[LedgerRecord] = []
        self.known_accounts: set[str] = set()
        self.closed = False
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        for chunk in self.path.read_bytes().split(b"\n"):
            if not chunk:
                continue
            doc = json.loads(chunk.decode("utf-8"))
            payload = payload_from_doc(doc["payload"])
            record = LedgerRecord(index=int(doc["index"]), prev_hash=doc["prev_hash"],
                                  payload=payload, timestamp=int(doc["timestamp"]),
                                  hash=doc["hash"])
            self.records.append(record)
            self._note_accounts(payload)
        bad = self.verify_chain()
        if bad is not None:
            raise ValidationError(f"ledger file fails verification at index {bad}")

    def _note_accounts(self, payload):
        if isinstance(payload, AccountOpen):
            self.known_accounts.add(payload.account)
        elif isinstance(payload, Agreement):
            self.known_accounts.add(payload.designer)
        elif isinstance(payload, Contribution):
            self.known_accounts.add(payload.account)
        elif isinstance(payload, Breakthrough):
            self.known_accounts.add(payload.submitter)
        elif isinstance(payload, Distribution):
            self.known_accounts.update(account for account, _ in payload.payouts)

    # -- append & verify --------------------------------------------------

    def append(self, payload, now: int | None = None) -> LedgerRecord:
        with self._lock:
            self._validate(payload)
            index = len(self.records)
            prev_hash = self.records[-1].hash if self.records else ZERO_HASH
            timestamp = int(time.time() * 1000) if now is None else now
            digest = record_hash(index, prev_hash, payload.to_doc(), timestamp)
            record = LedgerRecord(index=index, prev_hash=prev_hash, payload=payload,
                                  timestamp=timestamp, hash=digest)
            self.records.append(record)
            self._note_accounts(payload)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical_json(record.to_doc()) + "\n")
        return record

    def _validate(self, payload):
        if isinstance(payload, AccountOpen):
            if not payload.account:
                raise ValidationError("account id must be non-empty")
        elif isinstance(payload, Agreement):
            if payload.provider_share_den <= 0:
                raise ValidationError("provider share denominator must be positive")
            if not 0 <= payload.provider_share_num <= payload.provider_share_den:
                raise ValidationError("provider share must lie in [0,1]")
            if payload.effective_from < 0:
                raise ValidationError("effective_from must be a record index")
        elif isinstance(payload, Contribution):
            if payload.gpu_seconds <= 0:
                raise ValidationError("contribution must be positive gpu-seconds")
        elif isinstance(payload, Revenue):
            if payload.amount_ucr < 0:
                raise NegativeAmount("revenue must be non-negative")
        elif isinstance(payload, Distribution):
            ref = payload.revenue_ref
            if not 0 <= ref < len(self.records):
                raise ValidationError(f"revenue_ref {ref} out of range")
            source = self.records[ref].payload
            if isinstance(source, Revenue):
                expected = source.amount_ucr
            elif isinstance(source, Breakthrough):
                expected = source.reward_ucr
            else:
                raise ValidationError("revenue_ref must point at revenue or breakthrough")
            paid = sum(amount for _, amount in payload.payouts)
            if paid != expected:
                raise ValidationError(f"payouts sum {paid} != referenced amount {expected}")
            if any(amount < 0 for _, amount in payload.payouts):
                raise ValidationError("negative payout")
        elif isinstance(payload, Breakthrough):
            if payload.reward_ucr < 0:
                raise NegativeAmount("breakthrough reward must be non-negative")
        else:
            raise ValidationError(f"unsupported payload: {payload!r}")

    def verify_chain(self) -> int | None:
        """None when intact, else the first bad index."""
        prev = ZERO_HASH
        for i, record in enumerate(self.records):
            if record.index != i or record.prev_hash != prev:
                return i
            if record_hash(i, prev, record.payload.to_doc(), record.timestamp) != record.hash:
                return i
            prev = record.hash
        return None

    # -- joint-mining operations -------------------------------------------

    def latest_agreement(self, model: str, as_of: int | None = None) -> Agreement:
        horizon = len(self.records) if as_of is None else as_of + 1
        chosen = None
        for record in self.records[:horizon]:
            payload = record.payload
            if isinstance(payload, Agreement) and payload.model == model \
                    and payload.effective_from <= horizon - 1:
                chosen = payload
        if chosen is None:
            raise NoAgreement(model)
        return chosen

    def contributions_in_window(self, start: int = 0, end: int | None = None) -> dict[str, int]:
        stop = len(self.records) - 1 if end is None else end
        totals: dict[str, int] = {}
        for record in self.records:
            if start <= record.index <= stop and isinstance(record.payload, Contribution):
                account = record.payload.account
                totals[account] = totals.get(account, 0) + record.payload.gpu_seconds
        return totals

    def distribute_revenue(self, model: str, amount_ucr: int,
                           as_of: int | None = None,
                           window: tuple[int, int | None] = (0, None),
                           now: int | None = None) -> LedgerRecord:
        """Split revenue between the model's designer and the providers who
        contributed gpu-seconds inside the window; exact to the micro-credit."""
        if amount_ucr < 0:
            raise NegativeAmount(f"revenue {amount_ucr}")
        agreement = self.latest_agreement(model, as_of)
        contributions = self.contributions_in_window(*window)
        provider_pool = (amount_ucr * agreement.provider_share_num) // agreement.provider_share_den
        designer_cut = amount_ucr - provider_pool
        payouts: dict[str, int] = {}
        if sum(contributions.values()) > 0:
            payouts.update(largest_remainder_split(provider_pool, contributions))
        else:
            designer_cut += provider_pool
        payouts[agreement.designer] = payouts.get(agreement.designer, 0) + designer_cut
        revenue = self.append(Revenue(model=model, amount_ucr=amount_ucr), now=now)
        distribution = Distribution(
            revenue_ref=revenue.index,
            payouts=tuple(sorted((a, v) for a, v in payouts.items() if v > 0)),
        )
        return self.append(distribution, now=now)

    def post_breakthrough(self, event, reward_ucr: int,
                          contributions: dict[str, int] | None = None,
                          funded_by: str = "treasury",
                          now: int | None = None) -> LedgerRecord:
        """Half the reward to the submitter (floored), the rest pro-rata to
        the search job's compute providers."""
        if reward_ucr < 0:
            raise NegativeAmount(f"reward {reward_ucr}")
        for record in self.records:
            payload = record.payload
            if isinstance(payload, Breakthrough) \
                    and payload.task_hash == event.task_hash \
                    and payload.new_utility == event.new_utility:
                raise DuplicateEvent(f"breakthrough for {event.task_hash} already posted")
        contributions = contributions or {}
        submitter_cut = reward_ucr // 2
        provider_pool = reward_ucr - submitter_cut
        payouts: dict[str, int] = {}
        if sum(contributions.values()) > 0:
            payouts.update(largest_remainder_split(provider_pool, contributions))
        else:
            submitter_cut += provider_pool
        payouts[event.submitter] = payouts.get(event.submitter, 0) + submitter_cut
        marker = self.append(Breakthrough(
            task_hash=event.task_hash, old_utility=event.old_utility,
            new_utility=event.new_utility, submitter=event.submitter,
            reward_ucr=reward_ucr, funded_by=funded_by), now=now)
        distribution = Distribution(
            revenue_ref=marker.index,
            payouts=tuple(sorted((a, v) for a, v in payouts.items() if v > 0)),
        )
        return self.append(distribution, now=now)

    def balance(self, account: str) -> int:
        if account not in self.known_accounts:
            raise UnknownAccount(account)
        total = 0
        for record in self.records:
            if isinstance(record.payload, Distribution):
                for payee, amount in record.payload.payouts:
                    if payee == account:
                        total += amount
        return total

    def balances(self) -> dict[str, int]:
        return {account: self.balance(account) for account in sorted(self.known_accounts)}


def verify_file(path: str | Path) -> int | None:
    """Chain verification straight off the raw log; None when intact.

    Records are delimited by 0x0A exactly; splitting on anything looser
    would let a flipped separator byte slip past undetected.
    """
    prev = ZERO_HASH
    index = 0
    for chunk in Path(path).read_bytes().split(b"\n"):
        if not chunk:
            continue
        try:
            doc = json.loads(chunk.decode("utf-8"))
            payload_doc = doc["payload"]
            stated_hash = doc["hash"]
            stated_index = int(doc["index"])
            stated_prev = doc["prev_hash"]
            timestamp = int(doc["timestamp"])
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError):
            return index
        if stated_index != index or stated_prev != prev:
            return index
        if record_hash(index, prev, payload_doc, timestamp) != stated_hash:
            return index
        prev = stated_hash
        index += 1
    return None
