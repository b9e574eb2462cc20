"""Assignment planning over a pool of model manifests.

A plan maps every subtask of a TaskSpec to one model. Utility is

    U = w_q * Q - w_c * (C / budget) - w_l * (L / deadline)

where Q is the mean over subtasks of the weakest-link capability match,
C the summed call cost, and L the critical-path latency; a term whose
denominator is unset is dropped. ``brute_force_plan`` enumerates every
assignment and is the oracle ``plan`` (beam search with an admissible
optimistic bound) must match whenever the beam is exhaustive.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .canon import doc_digest
from .errors import (
    EmptyPool,
    InfeasiblePlan,
    MismatchedReport,
    NoFeasiblePlan,
    ParseError,
    TooLarge,
    UnknownModel,
    UnrecognizedIntent,
    ValidationError,
)
from .workflow import Subtask, TaskSpec

BRUTE_FORCE_LIMIT = 10 ** 6
EPSILON_RECORD = 1e-9


@dataclass(frozen=True)
class PlannerWeights:
    w_q: float = 1.0
    w_c: float = 0.25
    w_l: float = 0.25
    beam_width: int = 8

    def __post_init__(self):
        if min(self.w_q, self.w_c, self.w_l) < 0:
            raise ValidationError("planner weights must be non-negative")
        if self.w_q == self.w_c == self.w_l == 0:
            raise ValidationError("at least one planner weight must be positive")
        if self.beam_width < 1:
            raise ValidationError("beam width must be >= 1")


@dataclass(frozen=True)
class UtilityBreakdown:
    quality: float
    cost_ucr: int
    latency_ms: int
    utility: float
    feasible: bool

    def to_doc(self) -> dict:
        return {
            "cost_ucr": self.cost_ucr,
            "feasible": self.feasible,
            "latency_ms": self.latency_ms,
            "quality": self.quality,
            "utility": self.utility,
        }


@dataclass(frozen=True)
class PathPlan:
    task_hash: str
    assignment: dict[str, tuple[str, int]]
    rationale: dict[str, str]
    utility: UtilityBreakdown

    def to_doc(self) -> dict:
        return {
            "assignment": {sid: list(ref) for sid, ref in sorted(self.assignment.items())},
            "rationale": dict(sorted(self.rationale.items())),
            "task_hash": self.task_hash,
            "utility": self.utility.to_doc(),
        }

    @classmethod
    def from_doc(cls, doc) -> "PathPlan":
        util = doc["utility"]
        return cls(
            task_hash=doc["task_hash"],
            assignment={sid: (ref[0], int(ref[1])) for sid, ref in doc["assignment"].items()},
            rationale=dict(doc["rationale"]),
            utility=UtilityBreakdown(
                quality=float(util["quality"]),
                cost_ucr=int(util["cost_ucr"]),
                latency_ms=int(util["latency_ms"]),
                utility=float(util["utility"]),
                feasible=bool(util["feasible"]),
            ),
        )


def subtask_match(manifest, required_tags) -> float:
    """Weakest-link score: min capability over the required tags, absent = 0."""
    return min(manifest.capabilities.get(tag, 0.0) for tag in required_tags)


def critical_path_latency(task: TaskSpec, latency_of) -> int:
    longest: dict[str, int] = {}
    for sid in topological_order(task):
        prereq_best = max((longest[p] for p in task.prerequisites(sid)), default=0)
        longest[sid] = prereq_best + latency_of(sid)
    return max(longest.values(), default=0)


def topological_order(task: TaskSpec) -> list[str]:
    """Deterministic topo order: ready set drained in subtask-id order."""
    pending = {sid: len(task.prerequisites(sid)) for sid in task.subtasks}
    dependents = {sid: task.dependents(sid) for sid in task.subtasks}
    ready = sorted(sid for sid, n in pending.items() if n == 0)
    order = []
    while ready:
        sid = ready.pop(0)
        order.append(sid)
        changed = False
        for nxt in dependents[sid]:
            pending[nxt] -= 1
            if pending[nxt] == 0:
                ready.append(nxt)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(task.subtasks):
        raise ValidationError("task dependencies contain a cycle")
    return order


def evaluate_plan(assignment: dict[str, tuple[str, int] | str], task: TaskSpec,
                  pool: dict, weights: PlannerWeights) -> UtilityBreakdown:
    """Score a total assignment against a pool snapshot."""
    manifests = {}
    for sid in task.subtasks:
        if sid not in assignment:
            raise ValidationError(f"assignment missing subtask {sid}")
        ref = assignment[sid]
        name = ref if isinstance(ref, str) else ref[0]
        manifest = pool.get(name)
        if manifest is None:
            raise UnknownModel(name)
        if not isinstance(ref, str) and int(ref[1]) != manifest.version:
            raise UnknownModel(f"{name}@{ref[1]}")
        manifests[sid] = manifest

    matches = {sid: subtask_match(manifests[sid], task.subtasks[sid].required_tags)
               for sid in task.subtasks}
    quality = sum(matches.values()) / len(matches) if matches else 0.0
    cost = sum(m.cost_per_call for m in manifests.values())
    latency = critical_path_latency(task, lambda sid: manifests[sid].latency_ms)
    return _breakdown(quality, cost, latency, task, weights)


def _breakdown(quality, cost, latency, task, weights) -> UtilityBreakdown:
    utility = weights.w_q * quality
    feasible = True
    if task.budget_ucr is not None:
        utility -= weights.w_c * (cost / task.budget_ucr)
        feasible = feasible and cost <= task.budget_ucr
    if task.deadline_ms is not None:
        utility -= weights.w_l * (latency / task.deadline_ms)
        feasible = feasible and latency <= task.deadline_ms
    return UtilityBreakdown(quality=quality, cost_ucr=cost, latency_ms=latency,
                            utility=utility, feasible=feasible)


def _build_plan(task, pool, vector_by_sid, weights) -> PathPlan:
    assignment = {}
    rationale = {}
    for sid, name in vector_by_sid.items():
        manifest = pool[name]
        assignment[sid] = (name, manifest.version)
        match = subtask_match(manifest, task.subtasks[sid].required_tags)
        rationale[sid] = f"chose {name} match {match:.4f} cost {manifest.cost_per_call}"
    utility = evaluate_plan(assignment, task, pool, weights)
    return PathPlan(task_hash=task.task_hash, assignment=assignment,
                    rationale=rationale, utility=utility)


def brute_force_plan(task: TaskSpec, pool: dict, weights: PlannerWeights) -> PathPlan:
    """Exhaustive oracle; ties go to the lexicographically smallest vector."""
    if not pool:
        raise EmptyPool("pool snapshot is empty")
    if not task.subtasks:
        raise NoFeasiblePlan("task has no subtasks")
    sids = sorted(task.subtasks)
    names = sorted(pool)
    if len(names) ** len(sids) > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"{len(names)}^{len(sids)} assignments exceed {BRUTE_FORCE_LIMIT}")

    best = None          # (utility, vector) among feasible
    best_overall = None  # (utility, vector) among all
    for vector in itertools.product(names, repeat=len(sids)):
        assignment = dict(zip(sids, vector))
        breakdown = evaluate_plan(assignment, task, pool, weights)
        candidate = (breakdown.utility, vector)
        if best_overall is None or breakdown.utility > best_overall[0]:
            best_overall = candidate
        if breakdown.feasible and (best is None or breakdown.utility > best[0]):
            best = candidate
    chosen = best if best is not None else best_overall
    return _build_plan(task, pool, dict(zip(sids, chosen[1])), weights)


def plan(task: TaskSpec, pool: dict, weights: PlannerWeights | None = None,
         candidates: dict[str, list[str]] | None = None) -> PathPlan:
    """Beam search in topological order under an admissible optimistic bound.

    Partial states are scored as if every unassigned subtask had a perfect
    match at zero cost and latency, which never underestimates the best
    completion; an exhaustive beam therefore reproduces the brute-force
    optimum exactly. ``candidates`` restricts the models considered per
    subtask (what-if pins and exclusions); empty/missing entries mean
    unrestricted.
    """
    weights = weights or PlannerWeights()
    if not pool:
        raise EmptyPool("pool snapshot is empty")
    if not task.subtasks:
        raise NoFeasiblePlan("task has no subtasks")

    allowed = {}
    for sid in task.subtasks:
        wanted = (candidates or {}).get(sid) or []
        for name in wanted:
            if name not in pool:
                raise UnknownModel(name)
        allowed[sid] = sorted(wanted) if wanted else sorted(pool)

    order = topological_order(task)
    n = len(order)
    all_sids = sorted(task.subtasks)

    # state: (vector keyed by beam order, sum of matches, summed cost)
    states = [((), 0.0, 0)]
    for depth, sid in enumerate(order):
        requirement = task.subtasks[sid].required_tags
        expanded = []
        for vector, match_sum, cost in states:
            for name in allowed[sid]:
                manifest = pool[name]
                match = subtask_match(manifest, requirement)
                expanded.append((vector + (name,), match_sum + match,
                                 cost + manifest.cost_per_call))
        scored = []
        assigned = order[:depth + 1]
        for vector, match_sum, cost in expanded:
            by_sid = dict(zip(assigned, vector))
            optimistic_quality = (match_sum + (n - len(assigned))) / n
            latency = critical_path_latency(
                task, lambda s: pool[by_sid[s]].latency_ms if s in by_sid else 0)
            bound = _breakdown(optimistic_quality, cost, latency, task, weights).utility
            tie_vector = tuple(by_sid.get(s, "") for s in all_sids)
            scored.append((-bound, tie_vector, (vector, match_sum, cost)))
        scored.sort(key=lambda item: item[:2])
        states = [state for *_, state in scored[:weights.beam_width]]

    finals = []
    for vector, _, _ in states:
        by_sid = dict(zip(order, vector))
        breakdown = evaluate_plan(by_sid, task, pool, weights)
        tie_vector = tuple(by_sid[s] for s in all_sids)
        finals.append((not breakdown.feasible, -breakdown.utility, tie_vector, by_sid))
    finals.sort(key=lambda item: item[:3])
    return _build_plan(task, pool, finals[0][3], weights)


# -- optimal path records -------------------------------------------------


@dataclass(frozen=True)
class BreakthroughEvent:
    task_hash: str
    old_utility: float | None
    new_utility: float
    submitter: str

    def to_doc(self) -> dict:
        return {
            "new_utility": self.new_utility,
            "old_utility": self.old_utility,
            "submitter": self.submitter,
            "task_hash": self.task_hash,
        }


@dataclass(frozen=True)
class OptimalPathRecord:
    task_hash: str
    best_utility: float
    holder_plan: PathPlan
    set_at: int
    submitter: str

    def to_doc(self) -> dict:
        return {
            "best_utility": self.best_utility,
            "holder_plan": self.holder_plan.to_doc(),
            "set_at": self.set_at,
            "submitter": self.submitter,
            "task_hash": self.task_hash,
        }


class OptimalPathStore:
    """Append-only per-task record table; improvements must clear epsilon."""

    def __init__(self, epsilon: float = EPSILON_RECORD):
        self.epsilon = epsilon
        self._history: dict[str, list[OptimalPathRecord]] = {}

    def current(self, task_hash: str) -> OptimalPathRecord | None:
        records = self._history.get(task_hash)
        return records[-1] if records else None

    def history(self, task_hash: str) -> list[OptimalPathRecord]:
        return list(self._history.get(task_hash, []))

    def record_if_best(self, plan: PathPlan, submitter: str,
                       now: int = 0) -> BreakthroughEvent | None:
        if not plan.utility.feasible:
            raise InfeasiblePlan("only feasible plans may set records")
        current = self.current(plan.task_hash)
        old = current.best_utility if current else None
        if current is not None and plan.utility.utility <= old + self.epsilon:
            return None
        record = OptimalPathRecord(
            task_hash=plan.task_hash,
            best_utility=plan.utility.utility,
            holder_plan=plan,
            set_at=now,
            submitter=submitter,
        )
        self._history.setdefault(plan.task_hash, []).append(record)
        return BreakthroughEvent(task_hash=plan.task_hash, old_utility=old,
                                 new_utility=plan.utility.utility, submitter=submitter)


# -- natural-language interpretation --------------------------------------

_WORD_OR_BREAK = re.compile(r"[a-z0-9]+|;")
_CONNECTIVES = {"then", ";"}


def interpret_request(text: str, lexicon: dict[str, str]) -> TaskSpec:
    """Left-to-right keyword scan; 'then'/';' between matches chain them."""
    if not lexicon:
        raise ValidationError("lexicon must be non-empty")
    lookup = {k.lower(): v for k, v in lexicon.items()}
    subtasks = {}
    deps = set()
    previous = None
    connective_seen = False
    for token in _WORD_OR_BREAK.findall(text.lower()):
        if token in _CONNECTIVES:
            connective_seen = True
            continue
        tag = lookup.get(token)
        if tag is None:
            continue
        sid = f"s{len(subtasks) + 1}"
        subtasks[sid] = Subtask(required_tags=frozenset([tag]), difficulty=0.5, novel=False)
        if previous is not None and connective_seen:
            deps.add((previous, sid))
        previous = sid
        connective_seen = False
    if not subtasks:
        raise UnrecognizedIntent(f"no lexicon keyword matches: {text!r}")
    return TaskSpec.create(subtasks, deps)


def parse_lexicon(text: str) -> dict[str, str]:
    """`keyword = tag` lines; `#` starts a comment."""
    lexicon = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected `keyword = tag`", line=lineno)
        keyword, tag = (part.strip() for part in line.split("=", 1))
        if not keyword or not tag or " " in keyword:
            raise ParseError(f"bad lexicon entry {raw.strip()!r}", line=lineno)
        lexicon[keyword.lower()] = tag
    return lexicon


# -- reflection-driven refinement ------------------------------------------


def refine_plan(previous: PathPlan, report, task: TaskSpec, pool: dict,
                weights: PlannerWeights | None = None, memories=None,
                now: int = 0) -> PathPlan:
    """Replan with each failed subtask's model excluded for that subtask.

    If exclusion would empty a subtask's candidate set, its full candidate
    set is restored and the best effort returned. Each failure is recorded
    in the memory stream when one is supplied.
    """
    weights = weights or PlannerWeights()
    if report.task_hash != task.task_hash or previous.task_hash != task.task_hash:
        raise MismatchedReport("report does not belong to this plan/task")
    candidates: dict[str, list[str]] = {}
    for sid, result in sorted(report.results.items()):
        if result.passed:
            continue
        failed_model = result.model[0]
        remaining = sorted(name for name in pool if name != failed_model)
        if remaining:
            candidates[sid] = remaining
        if memories is not None:
            memories.add(f"subtask {sid} failed with {failed_model}", importance=6, now=now)
    return plan(task, pool, weights, candidates=candidates)
