/** Ledger and registry browsing pane: paginated chain view with linkage
 * status, account balances, and model version timelines.
 */

import type { LedgerRecordDoc, VersionRow } from "./types.js";
import { chainLinkage, describePayload, paginate, versionTimeline } from "./ledgerview.js";

export class BrowsePane {
  readonly root: HTMLElement;
  pageSize = 10;

  constructor(container: HTMLElement) {
    this.root = container;
    container.classList.add("wf-browse");
  }

  renderChain(records: LedgerRecordDoc[], page = 0): void {
    this.root.replaceChildren();
    if (records.length === 0) {
      const empty = document.createElement("p");
      empty.className = "wf-empty";
      empty.textContent = "ledger is empty";
      this.root.appendChild(empty);
      return;
    }
    const { statuses, firstBadIndex } = chainLinkage(records);
    const view = paginate(records, page, this.pageSize);
    const list = document.createElement("ol");
    list.className = "wf-chain";
    list.dataset["page"] = String(view.page);
    list.dataset["pageCount"] = String(view.pageCount);
    for (const record of view.items) {
      const item = document.createElement("li");
      const status = statuses[record.index]!;
      item.dataset["index"] = String(record.index);
      item.className = status.linked ? "wf-link-ok" : "wf-link-bad";
      item.textContent = `#${record.index} ${describePayload(record)}`;
      list.appendChild(item);
    }
    this.root.appendChild(list);
    if (firstBadIndex !== null) {
      const warning = document.createElement("p");
      warning.className = "wf-chain-warning";
      warning.textContent = `chain linkage breaks at index ${firstBadIndex}`;
      this.root.appendChild(warning);
    }
  }

  renderBalance(account: string, balanceUcr: number): void {
    const row = document.createElement("p");
    row.className = "wf-balance";
    row.dataset["account"] = account;
    row.textContent = `${account}: ${balanceUcr} ucr`;
    this.root.appendChild(row);
  }

  renderTimeline(name: string, rows: VersionRow[]): void {
    const heading = document.createElement("h3");
    heading.textContent = name;
    this.root.appendChild(heading);
    const list = document.createElement("ul");
    list.className = "wf-timeline";
    list.dataset["model"] = name;
    for (const entry of versionTimeline(rows)) {
      const item = document.createElement("li");
      item.textContent = `v${entry.version} — ${entry.changelog}`;
      list.appendChild(item);
    }
    this.root.appendChild(list);
  }
}
