/** Plan pane: renders gateway plan responses (assignment tree, utility
 * breakdown, record banner, error envelopes) and drives what-if replans.
 * Every figure shown is copied verbatim from a gateway document.
 */

import type { EnvelopeError } from "./api.js";
import type { PlanDoc, PlanResponse } from "./types.js";
import { diffAssignments } from "./whatif.js";

export class PlanView {
  readonly root: HTMLElement;
  private lastPlan: PlanDoc | null = null;

  constructor(container: HTMLElement) {
    this.root = container;
    container.classList.add("wf-planview");
  }

  renderResponse(response: PlanResponse): void {
    const plan = response.plan;
    const changed = new Set(diffAssignments(this.lastPlan, plan));
    this.lastPlan = plan;
    this.root.replaceChildren();

    if (response.breakthrough) {
      const banner = document.createElement("div");
      banner.className = "wf-banner wf-banner-record";
      const from = response.breakthrough.old_utility;
      banner.textContent =
        from === null
          ? `record: first utility ${response.breakthrough.new_utility}`
          : `record: ${from} → ${response.breakthrough.new_utility}`;
      this.root.appendChild(banner);
    }

    const utility = document.createElement("dl");
    utility.className = "wf-utility";
    const rows: [string, string][] = [
      ["utility", String(plan.utility.utility)],
      ["quality", String(plan.utility.quality)],
      ["cost_ucr", String(plan.utility.cost_ucr)],
      ["latency_ms", String(plan.utility.latency_ms)],
      ["feasible", String(plan.utility.feasible)],
      ["cached", String(response.cached)],
    ];
    for (const [term, value] of rows) {
      const dt = document.createElement("dt");
      dt.textContent = term;
      const dd = document.createElement("dd");
      dd.dataset["field"] = term;
      dd.textContent = value;
      utility.append(dt, dd);
    }
    this.root.appendChild(utility);

    const tree = document.createElement("ul");
    tree.className = "wf-assignment";
    for (const subtask of Object.keys(plan.assignment).sort()) {
      const [model, version] = plan.assignment[subtask]!;
      const item = document.createElement("li");
      item.dataset["subtask"] = subtask;
      if (changed.has(subtask)) item.classList.add("wf-changed");
      item.textContent = `${subtask} → ${model}@${version} — ${plan.rationale[subtask] ?? ""}`;
      tree.appendChild(item);
    }
    this.root.appendChild(tree);

    if (response.record) {
      const record = document.createElement("p");
      record.className = "wf-current-record";
      record.textContent =
        `current record ${response.record.best_utility} held by ${response.record.submitter}`;
      this.root.appendChild(record);
    }
  }

  renderError(error: EnvelopeError): void {
    this.root.replaceChildren();
    const banner = document.createElement("div");
    banner.className = "wf-banner wf-banner-error";
    banner.dataset["code"] = error.envelope.code;
    banner.textContent = `${error.envelope.code}: ${error.envelope.message}`;
    this.root.appendChild(banner);
  }

  changedSubtasks(): string[] {
    return [...this.root.querySelectorAll<HTMLElement>(".wf-changed")].map(
      (el) => el.dataset["subtask"]!,
    );
  }
}
