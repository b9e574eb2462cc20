/** Studio assembly: editor + what-if plan pane + ledger/registry browser,
 * all speaking to one gateway.
 */

import { EnvelopeError, StudioClient } from "./api.js";
import { BrowsePane } from "./browsepane.js";
import { WorkflowEditor } from "./editor.js";
import { PlanView } from "./planview.js";
import type { TaskDoc } from "./types.js";
import { candidatesFor, newWhatIf, pin, exclude, type WhatIfState } from "./whatif.js";

export interface StudioOptions {
  gatewayUrl: string;
  token: string;
  fetchImpl?: (input: string, init?: RequestInit) => Promise<Response>;
}

export class Studio {
  readonly client: StudioClient;
  readonly editor: WorkflowEditor;
  readonly planView: PlanView;
  readonly browser: BrowsePane;
  whatIf: WhatIfState | null = null;
  pool: string[] = [];

  constructor(root: HTMLElement, options: StudioOptions) {
    this.client = new StudioClient(options.gatewayUrl, options.token, options.fetchImpl);
    const editorPane = document.createElement("div");
    const planPane = document.createElement("div");
    const browsePane = document.createElement("div");
    root.append(editorPane, planPane, browsePane);
    this.editor = new WorkflowEditor(editorPane);
    this.planView = new PlanView(planPane);
    this.browser = new BrowsePane(browsePane);
  }

  /** Candidate model universe: search on the task's capability tags. */
  async refreshPool(task: TaskDoc): Promise<string[]> {
    const tags = new Set<string>();
    for (const subtask of Object.values(task.subtasks)) {
      for (const tag of subtask.required_tags) tags.add(tag);
    }
    const manifests = await this.client.searchModels([...tags].sort().join(" "), 100);
    this.pool = [...new Set(manifests.map((m) => m.name))].sort();
    return this.pool;
  }

  async startWhatIf(task: TaskDoc): Promise<void> {
    this.whatIf = newWhatIf(task);
    await this.refreshPool(task).catch(() => []);
    await this.replan();
  }

  pinModel(subtask: string, model: string): void {
    if (!this.whatIf) throw new Error("no active task");
    pin(this.whatIf, subtask, model);
  }

  excludeModel(subtask: string, model: string): void {
    if (!this.whatIf) throw new Error("no active task");
    exclude(this.whatIf, subtask, model);
  }

  async replan(): Promise<void> {
    if (!this.whatIf) throw new Error("no active task");
    try {
      const response = await this.client.plan(this.whatIf.task, {
        candidates: candidatesFor(this.whatIf, this.pool),
        weights: this.whatIf.weights,
        beamWidth: this.whatIf.beamWidth,
      });
      this.planView.renderResponse(response);
    } catch (error) {
      if (error instanceof EnvelopeError) {
        this.planView.renderError(error);
        return;
      }
      throw error;
    }
  }

  async refreshLedger(page = 0): Promise<void> {
    const records = await this.client.ledgerRecords();
    this.browser.renderChain(records, page);
  }
}
