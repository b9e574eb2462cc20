/** Structural validation mirroring the gateway's graph invariants, so the
 * editor can badge offending nodes while offline. Domain numbers are never
 * computed here; this is shape checking only.
 */

import type { CanvasDocument } from "./canvas.js";
import { isWorkKind } from "./canvas.js";

export interface Violation {
  code:
    | "UNKNOWN_NODE"
    | "CYCLE"
    | "INPUT_COUNT"
    | "OUTPUT_COUNT"
    | "DEAD_NODE"
    | "REQUIREMENTS"
    | "DIFFICULTY";
  subjects: string[];
}

export function validateCanvas(canvas: CanvasDocument): Violation[] {
  const violations: Violation[] = [];
  const ids = new Set(canvas.nodes.keys());

  for (const edge of canvas.edges) {
    for (const end of [edge.from, edge.to]) {
      if (!ids.has(end)) violations.push({ code: "UNKNOWN_NODE", subjects: [end] });
    }
  }

  const inputs = [...canvas.nodes.values()].filter((n) => n.kind === "INPUT").map((n) => n.id);
  const outputs = [...canvas.nodes.values()].filter((n) => n.kind === "OUTPUT").map((n) => n.id);
  if (inputs.length !== 1) violations.push({ code: "INPUT_COUNT", subjects: inputs.sort() });
  if (outputs.length !== 1) violations.push({ code: "OUTPUT_COUNT", subjects: outputs.sort() });

  for (const node of [...canvas.nodes.values()].sort((a, b) => (a.id < b.id ? -1 : 1))) {
    if (isWorkKind(node.kind)) {
      if (node.requiredTags.length === 0) {
        violations.push({ code: "REQUIREMENTS", subjects: [node.id] });
      }
      if (!(node.difficulty >= 0 && node.difficulty <= 1)) {
        violations.push({ code: "DIFFICULTY", subjects: [node.id] });
      }
    } else if (node.requiredTags.length > 0) {
      violations.push({ code: "REQUIREMENTS", subjects: [node.id] });
    }
  }

  const edges = canvas.edges.filter((e) => ids.has(e.from) && ids.has(e.to));
  const cyclic = nodesOnCycles(ids, edges);
  if (cyclic.size > 0) {
    violations.push({ code: "CYCLE", subjects: [...cyclic].sort() });
  }

  if (inputs.length === 1 && outputs.length === 1 && cyclic.size === 0) {
    const forward = reach(inputs[0]!, edges.map((e) => [e.from, e.to]));
    const backward = reach(outputs[0]!, edges.map((e) => [e.to, e.from]));
    for (const id of [...ids].sort()) {
      if (!forward.has(id) || !backward.has(id)) {
        violations.push({ code: "DEAD_NODE", subjects: [id] });
      }
    }
  }
  return violations;
}

function reach(start: string, arcs: [string, string][]): Set<string> {
  const adjacency = new Map<string, string[]>();
  for (const [a, b] of arcs) {
    const list = adjacency.get(a) ?? [];
    list.push(b);
    adjacency.set(a, list);
  }
  const seen = new Set([start]);
  const stack = [start];
  while (stack.length > 0) {
    for (const next of adjacency.get(stack.pop()!) ?? []) {
      if (!seen.has(next)) {
        seen.add(next);
        stack.push(next);
      }
    }
  }
  return seen;
}

function nodesOnCycles(ids: Set<string>, edges: { from: string; to: string }[]): Set<string> {
  // peel sources and sinks until a fixed point; survivors sit on cycles
  let remaining = new Set(ids);
  let live = edges.slice();
  let changed = true;
  while (changed) {
    changed = false;
    const indeg = new Map<string, number>();
    const outdeg = new Map<string, number>();
    for (const id of remaining) {
      indeg.set(id, 0);
      outdeg.set(id, 0);
    }
    for (const e of live) {
      outdeg.set(e.from, (outdeg.get(e.from) ?? 0) + 1);
      indeg.set(e.to, (indeg.get(e.to) ?? 0) + 1);
    }
    const removable = [...remaining].filter(
      (id) => (indeg.get(id) ?? 0) === 0 || (outdeg.get(id) ?? 0) === 0,
    );
    if (removable.length > 0) {
      for (const id of removable) remaining.delete(id);
      live = live.filter((e) => remaining.has(e.from) && remaining.has(e.to));
      changed = true;
    }
  }
  return remaining;
}

/** Violations grouped per node id, for inline badges. */
export function badgesByNode(violations: Violation[]): Map<string, string[]> {
  const badges = new Map<string, string[]>();
  for (const violation of violations) {
    for (const subject of violation.subjects) {
      const list = badges.get(subject) ?? [];
      if (!list.includes(violation.code)) list.push(violation.code);
      badges.set(subject, list);
    }
  }
  return badges;
}
