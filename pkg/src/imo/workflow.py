"""Workflow graphs: the typed node/edge model the studio edits and the
planner consumes.

Graphs are pure values. A valid graph is acyclic, has exactly one INPUT
and one OUTPUT node, and every node sits on some INPUT-to-OUTPUT path.
Compiling a valid graph projects its PROCESS/MODEL_CALL nodes into a
TaskSpec whose hash is stable under any field or iteration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .canon import canonical_bytes, doc_digest
from .errors import InvalidGraph, ParseError, UnknownField, ValidationError


class NodeKind(str, Enum):
    INPUT = "INPUT"
    OUTPUT = "OUTPUT"
    PROCESS = "PROCESS"
    MODEL_CALL = "MODEL_CALL"


WORK_KINDS = (NodeKind.PROCESS, NodeKind.MODEL_CALL)


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    required_tags: frozenset[str] = frozenset()
    difficulty: float = 0.5
    novel: bool = False
    rationale: str = ""


@dataclass(frozen=True)
class WorkflowGraph:
    name: str
    nodes: dict[str, Node]
    edges: frozenset[tuple[str, str]]


@dataclass(frozen=True)
class Violation:
    code: str
    subjects: tuple[str, ...]

    def __str__(self):
        return f"{self.code}{{{', '.join(self.subjects)}}}"


@dataclass(frozen=True)
class Subtask:
    required_tags: frozenset[str]
    difficulty: float
    novel: bool


@dataclass(frozen=True)
class TaskSpec:
    subtasks: dict[str, Subtask]
    deps: frozenset[tuple[str, str]]
    budget_ucr: int | None
    deadline_ms: int | None
    task_hash: str

    @classmethod
    def create(cls, subtasks, deps, budget_ucr=None, deadline_ms=None) -> "TaskSpec":
        if budget_ucr is not None and budget_ucr <= 0:
            raise ValidationError("budget must be positive or unset")
        if deadline_ms is not None and deadline_ms <= 0:
            raise ValidationError("deadline must be positive or unset")
        deps = frozenset((str(a), str(b)) for a, b in deps)
        subtasks = dict(subtasks)
        body = _task_body_doc(subtasks, deps, budget_ucr, deadline_ms)
        return cls(subtasks=subtasks, deps=deps, budget_ucr=budget_ucr,
                   deadline_ms=deadline_ms, task_hash=doc_digest(body))

    def to_doc(self) -> dict:
        doc = _task_body_doc(self.subtasks, self.deps, self.budget_ucr, self.deadline_ms)
        doc["task_hash"] = self.task_hash
        return doc

    @classmethod
    def from_doc(cls, doc) -> "TaskSpec":
        subtasks = {
            sid: Subtask(
                required_tags=frozenset(body["required_tags"]),
                difficulty=float(body["difficulty"]),
                novel=bool(body["novel"]),
            )
            for sid, body in doc["subtasks"].items()
        }
        spec = cls.create(
            subtasks,
            [tuple(pair) for pair in doc["deps"]],
            budget_ucr=doc.get("budget_ucr"),
            deadline_ms=doc.get("deadline_ms"),
        )
        stated = doc.get("task_hash")
        if stated is not None and stated != spec.task_hash:
            raise ValidationError("task_hash does not recompute from content")
        return spec

    def prerequisites(self, sid: str) -> list[str]:
        return sorted(a for a, b in self.deps if b == sid)

    def dependents(self, sid: str) -> list[str]:
        return sorted(b for a, b in self.deps if a == sid)


def _task_body_doc(subtasks, deps, budget_ucr, deadline_ms) -> dict:
    return {
        "budget_ucr": budget_ucr,
        "deadline_ms": deadline_ms,
        "deps": sorted([a, b] for a, b in deps),
        "subtasks": {
            sid: {
                "difficulty": sub.difficulty,
                "novel": sub.novel,
                "required_tags": sorted(sub.required_tags),
            }
            for sid, sub in sorted(subtasks.items())
        },
    }


# -- validation ---------------------------------------------------------


def validate_graph(graph: WorkflowGraph) -> list[Violation]:
    """Every violated invariant, with offending node/edge ids; [] means OK."""
    violations = []
    nodes = graph.nodes
    for a, b in sorted(graph.edges):
        for end in (a, b):
            if end not in nodes:
                violations.append(Violation("UNKNOWN_NODE", (end,)))

    inputs = sorted(n.id for n in nodes.values() if n.kind is NodeKind.INPUT)
    outputs = sorted(n.id for n in nodes.values() if n.kind is NodeKind.OUTPUT)
    if len(inputs) != 1:
        violations.append(Violation("INPUT_COUNT", tuple(inputs)))
    if len(outputs) != 1:
        violations.append(Violation("OUTPUT_COUNT", tuple(outputs)))

    for node in sorted(nodes.values(), key=lambda n: n.id):
        if node.kind in WORK_KINDS:
            if not node.required_tags:
                violations.append(Violation("REQUIREMENTS", (node.id,)))
            if not 0.0 <= node.difficulty <= 1.0:
                violations.append(Violation("DIFFICULTY", (node.id,)))
        elif node.required_tags:
            violations.append(Violation("REQUIREMENTS", (node.id,)))

    edges = {(a, b) for a, b in graph.edges if a in nodes and b in nodes}
    cyclic = _nodes_on_cycles(set(nodes), edges)
    if cyclic:
        violations.append(Violation("CYCLE", tuple(sorted(cyclic))))

    if len(inputs) == 1 and len(outputs) == 1 and not cyclic:
        on_path = _reachable(inputs[0], edges) & _reachable(outputs[0], _reverse(edges))
        for nid in sorted(set(nodes) - on_path):
            violations.append(Violation("DEAD_NODE", (nid,)))
    return violations


def _reverse(edges):
    return {(b, a) for a, b in edges}


def _reachable(start, edges):
    adjacency = {}
    for a, b in edges:
        adjacency.setdefault(a, []).append(b)
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adjacency.get(stack.pop(), []):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _nodes_on_cycles(node_ids, edges) -> set[str]:
    # Iteratively strip sources and sinks; whatever survives lies on a cycle.
    remaining = set(node_ids)
    live = set(edges)
    changed = True
    while changed:
        changed = False
        indeg = {n: 0 for n in remaining}
        outdeg = {n: 0 for n in remaining}
        for a, b in live:
            outdeg[a] += 1
            indeg[b] += 1
        removable = {n for n in remaining if indeg[n] == 0 or outdeg[n] == 0}
        if removable:
            remaining -= removable
            live = {(a, b) for a, b in live if a in remaining and b in remaining}
            changed = True
    return remaining


# -- compilation --------------------------------------------------------


def compile_graph(graph: WorkflowGraph, budget_ucr: int | None = None,
                  deadline_ms: int | None = None) -> TaskSpec:
    violations = validate_graph(graph)
    if violations:
        raise InvalidGraph(violations)
    subtasks = {
        node.id: Subtask(required_tags=node.required_tags,
                         difficulty=node.difficulty, novel=node.novel)
        for node in graph.nodes.values()
        if node.kind in WORK_KINDS
    }
    deps = {(a, b) for a, b in graph.edges if a in subtasks and b in subtasks}
    return TaskSpec.create(subtasks, deps, budget_ucr=budget_ucr, deadline_ms=deadline_ms)


# -- serialization ------------------------------------------------------

_TOP_FIELDS = {"edges", "name", "nodes"}
_PLAIN_NODE_FIELDS = {"id", "kind"}
_WORK_NODE_FIELDS = {"id", "kind", "required_tags", "difficulty", "novel", "rationale"}


def serialize_graph(graph: WorkflowGraph) -> bytes:
    violations = validate_graph(graph)
    if violations:
        raise InvalidGraph(violations)
    nodes_doc = {}
    for nid, node in sorted(graph.nodes.items()):
        if node.kind in WORK_KINDS:
            nodes_doc[nid] = {
                "difficulty": node.difficulty,
                "id": node.id,
                "kind": node.kind.value,
                "novel": node.novel,
                "rationale": node.rationale,
                "required_tags": sorted(node.required_tags),
            }
        else:
            nodes_doc[nid] = {"id": node.id, "kind": node.kind.value}
    doc = {
        "edges": sorted([a, b] for a, b in graph.edges),
        "name": graph.name,
        "nodes": nodes_doc,
    }
    return canonical_bytes(doc)


def parse_graph(data: bytes | str) -> WorkflowGraph:
    """Strict parse: unknown document fields are rejected, not ignored."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError("document root must be an object")
    for key in doc:
        if key not in _TOP_FIELDS:
            raise UnknownField(key)
    for key in _TOP_FIELDS:
        if key not in doc:
            raise ParseError(f"missing field: {key}")
    if not isinstance(doc["nodes"], dict):
        raise ParseError("nodes must be an object")
    if not isinstance(doc["edges"], list):
        raise ParseError("edges must be a list")

    nodes = {}
    for nid, body in doc["nodes"].items():
        if not isinstance(body, dict):
            raise ParseError(f"node {nid} must be an object")
        kind_name = body.get("kind")
        try:
            kind = NodeKind(kind_name)
        except ValueError:
            raise ParseError(f"node {nid} has unknown kind {kind_name!r}") from None
        allowed = _WORK_NODE_FIELDS if kind in WORK_KINDS else _PLAIN_NODE_FIELDS
        for key in body:
            if key not in allowed:
                raise UnknownField(key)
        for key in allowed:
            if key not in body:
                raise ParseError(f"node {nid} missing field: {key}")
        if body["id"] != nid:
            raise ParseError(f"node {nid} id mismatch: {body['id']!r}")
        if kind in WORK_KINDS:
            nodes[nid] = Node(
                id=nid,
                kind=kind,
                required_tags=frozenset(str(t) for t in body["required_tags"]),
                difficulty=float(body["difficulty"]),
                novel=bool(body["novel"]),
                rationale=str(body["rationale"]),
            )
        else:
            nodes[nid] = Node(id=nid, kind=kind)

    edges = set()
    for pair in doc["edges"]:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"edge must be a [from, to] pair: {pair!r}")
        edges.add((str(pair[0]), str(pair[1])))
    return WorkflowGraph(name=str(doc["name"]), nodes=nodes, edges=frozenset(edges))
