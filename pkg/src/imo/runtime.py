"""Deterministic plan execution against mock model adapters.

An adapter passes a subtask exactly when its weakest-link capability
match reaches the subtask's difficulty, and emits a fingerprint of its
input, so identical (plan, task, input, pool) always produce identical
reports. Co-training pulls each capability toward the best partner's
score without ever exceeding the group's per-tag maximum.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, replace

from .canon import sha256_hex
from .errors import MismatchedReport, TooFewModels, UnknownModel, ValidationError
from .planner import PathPlan, critical_path_latency, subtask_match, topological_order
from .workflow import TaskSpec


@dataclass(frozen=True)
class SubtaskResult:
    model: tuple[str, int]
    passed: bool
    output: bytes
    latency_ms: int
    cost_ucr: int

    def to_doc(self) -> dict:
        return {
            "cost_ucr": self.cost_ucr,
            "latency_ms": self.latency_ms,
            "model": list(self.model),
            "output_b64": base64.b64encode(self.output).decode("ascii"),
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ExecutionReport:
    task_hash: str
    results: dict[str, SubtaskResult]
    total_cost_ucr: int
    critical_path_latency_ms: int

    def to_doc(self) -> dict:
        return {
            "critical_path_latency_ms": self.critical_path_latency_ms,
            "results": {sid: r.to_doc() for sid, r in sorted(self.results.items())},
            "task_hash": self.task_hash,
            "total_cost_ucr": self.total_cost_ucr,
        }

    @classmethod
    def from_doc(cls, doc) -> "ExecutionReport":
        results = {
            sid: SubtaskResult(
                model=(body["model"][0], int(body["model"][1])),
                passed=bool(body["passed"]),
                output=base64.b64decode(body["output_b64"]),
                latency_ms=int(body["latency_ms"]),
                cost_ucr=int(body["cost_ucr"]),
            )
            for sid, body in doc["results"].items()
        }
        return cls(task_hash=doc["task_hash"], results=results,
                   total_cost_ucr=int(doc["total_cost_ucr"]),
                   critical_path_latency_ms=int(doc["critical_path_latency_ms"]))


@dataclass(frozen=True)
class Scorecard:
    functional: float
    multi_step: float
    adaptability: float | None
    transparency: int
    comprehensive: float | None
    responsiveness: float | None = None

    def to_doc(self) -> dict:
        return {
            "adaptability": self.adaptability,
            "comprehensive": self.comprehensive,
            "functional": self.functional,
            "multi_step": self.multi_step,
            "responsiveness": self.responsiveness,
            "transparency": self.transparency,
        }


class MockAdapter:
    """Stand-in model: threshold pass/fail plus an input fingerprint."""

    def __init__(self, manifest):
        self.manifest = manifest

    def run(self, subtask_id: str, required_tags, difficulty: float,
            payload: bytes, force_fail: bool = False) -> SubtaskResult:
        match = subtask_match(self.manifest, required_tags)
        passed = (not force_fail) and match >= difficulty
        output = f"{self.manifest.name}:{subtask_id}:{sha256_hex(payload)[:8]}".encode("utf-8")
        return SubtaskResult(
            model=(self.manifest.name, self.manifest.version),
            passed=passed,
            output=output,
            latency_ms=self.manifest.latency_ms,
            cost_ucr=self.manifest.cost_per_call,
        )


def execute_plan(plan: PathPlan, task: TaskSpec, payload: bytes, pool: dict,
                 forced_failures: frozenset[tuple[str, str]] = frozenset()) -> ExecutionReport:
    """Run subtasks in topological order; each input is the task payload
    plus prerequisite outputs in subtask-id order.

    ``forced_failures`` holds (subtask id, model name) pairs that fail no
    matter their match score, for the gateway's responsiveness probe.
    """
    adapters = {}
    for sid in task.subtasks:
        if sid not in plan.assignment:
            raise ValidationError(f"plan does not assign subtask {sid}")
        name, version = plan.assignment[sid]
        manifest = pool.get(name)
        if manifest is None or manifest.version != version:
            raise UnknownModel(f"{name}@{version}")
        adapters[sid] = MockAdapter(manifest)

    results: dict[str, SubtaskResult] = {}
    for sid in topological_order(task):
        upstream = b"".join(results[p].output for p in task.prerequisites(sid))
        sub = task.subtasks[sid]
        forced = (sid, plan.assignment[sid][0]) in forced_failures
        results[sid] = adapters[sid].run(sid, sub.required_tags, sub.difficulty,
                                         payload + upstream, force_fail=forced)
    total_cost = sum(r.cost_ucr for r in results.values())
    latency = critical_path_latency(task, lambda sid: results[sid].latency_ms)
    return ExecutionReport(task_hash=task.task_hash, results=results,
                           total_cost_ucr=total_cost, critical_path_latency_ms=latency)


def _maximal_chains(task: TaskSpec) -> list[list[str]]:
    sources = sorted(sid for sid in task.subtasks if not task.prerequisites(sid))
    chains = []

    def walk(sid, path):
        nexts = task.dependents(sid)
        if not nexts:
            chains.append(path)
            return
        for nxt in nexts:
            walk(nxt, path + [nxt])

    for source in sources:
        walk(source, [source])
    return chains


def score_report(report: ExecutionReport, task: TaskSpec, plan: PathPlan) -> Scorecard:
    """Six evaluation axes; an axis with an empty population scores None."""
    if report.task_hash != task.task_hash or plan.task_hash != task.task_hash:
        raise MismatchedReport("report/plan/task hashes disagree")
    results = report.results
    total = len(task.subtasks)
    passed = sum(1 for r in results.values() if r.passed)
    functional = passed / total if total else 0.0

    chains = _maximal_chains(task)
    clean = sum(1 for chain in chains if all(results[sid].passed for sid in chain))
    multi_step = clean / len(chains) if chains else 0.0

    novel = [sid for sid, sub in task.subtasks.items() if sub.novel]
    adaptability = (sum(1 for sid in novel if results[sid].passed) / len(novel)
                    if novel else None)

    transparency = int(all(plan.rationale.get(sid, "").strip() for sid in task.subtasks))

    joins = [sid for sid in task.subtasks if len(task.prerequisites(sid)) >= 2]
    comprehensive = (sum(1 for sid in joins if results[sid].passed) / len(joins)
                     if joins else None)

    return Scorecard(functional=functional, multi_step=multi_step,
                     adaptability=adaptability, transparency=transparency,
                     comprehensive=comprehensive, responsiveness=None)


def with_responsiveness(card: Scorecard, value: float) -> Scorecard:
    return replace(card, responsiveness=value)


# -- co-training ------------------------------------------------------------


def co_train(capabilities: dict[str, dict[str, float]], rounds: int,
             eta: float = 0.1) -> dict[str, dict[str, float]]:
    """Per round, every model closes a fraction eta of its gap to the best
    partner on each tag, from pre-round values, clipped to [0,1]."""
    if len(capabilities) < 2:
        raise TooFewModels("co-training needs at least 2 models")
    if not 0.0 < eta <= 1.0:
        raise ValidationError("eta must lie in (0,1]")
    if rounds < 0:
        raise ValidationError("rounds must be >= 0")
    tags = sorted({tag for caps in capabilities.values() for tag in caps})
    state = {name: dict(caps) for name, caps in capabilities.items()}
    for _ in range(rounds):
        snapshot = {name: dict(caps) for name, caps in state.items()}
        for name in state:
            for tag in tags:
                mine = snapshot[name].get(tag, 0.0)
                best_partner = max(snapshot[p].get(tag, 0.0)
                                   for p in snapshot if p != name)
                gap = max(0.0, best_partner - mine)
                state[name][tag] = min(1.0, max(0.0, mine + eta * gap))
    return state


def co_train_models(registry, names: list[str], rounds: int, eta: float = 0.1,
                    now: int | None = None) -> dict:
    """Run co-training on the latest manifests and publish new versions."""
    manifests = {name: registry.get_manifest(name) for name in names}
    updated = co_train({n: m.capabilities for n, m in manifests.items()}, rounds, eta)
    published = {}
    for name in sorted(names):
        published[name] = registry.new_version_from(
            manifests[name], capabilities=updated[name],
            changelog=f"co-train r={rounds}", now=now)
    return published
