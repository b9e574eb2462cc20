/** Chain browsing helpers: pagination, per-record linkage status, and
 * model version timelines. Linkage status checks index density and
 * prev_hash continuity as reported by the gateway documents.
 */

import { GENESIS_HASH, type LedgerRecordDoc, type VersionRow } from "./types.js";

export interface LinkStatus {
  index: number;
  linked: boolean;
}

export function chainLinkage(records: LedgerRecordDoc[]): {
  statuses: LinkStatus[];
  firstBadIndex: number | null;
} {
  const statuses: LinkStatus[] = [];
  let firstBad: number | null = null;
  let prev = GENESIS_HASH;
  records.forEach((record, i) => {
    const linked = firstBad === null && record.index === i && record.prev_hash === prev;
    if (!linked && firstBad === null) firstBad = i;
    statuses.push({ index: i, linked });
    prev = record.hash;
  });
  return { statuses, firstBadIndex: firstBad };
}

export interface Page<T> {
  items: T[];
  page: number;
  pageCount: number;
}

export function paginate<T>(items: T[], page: number, pageSize: number): Page<T> {
  const pageCount = Math.max(1, Math.ceil(items.length / pageSize));
  const clamped = Math.min(Math.max(page, 0), pageCount - 1);
  return {
    items: items.slice(clamped * pageSize, (clamped + 1) * pageSize),
    page: clamped,
    pageCount,
  };
}

export interface TimelineEntry {
  version: number;
  createdAt: number;
  changelog: string;
}

export function versionTimeline(rows: VersionRow[]): TimelineEntry[] {
  return rows
    .slice()
    .sort((a, b) => a.version - b.version)
    .map((row) => ({ version: row.version, createdAt: row.created_at, changelog: row.changelog }));
}

export function describePayload(record: LedgerRecordDoc): string {
  const payload = record.payload;
  switch (payload.kind) {
    case "account_open":
      return `open ${payload["account"]}`;
    case "agreement":
      return `agreement ${payload["model"]}: provider share ${payload["provider_share_num"]}/${payload["provider_share_den"]}`;
    case "contribution":
      return `${payload["account"]} contributed ${payload["gpu_seconds"]} gpu-s`;
    case "revenue":
      return `revenue ${payload["amount_ucr"]} ucr for ${payload["model"]}`;
    case "distribution": {
      const payouts = Object.entries(payload["payouts"] as Record<string, number>)
        .map(([account, amount]) => `${account}:${amount}`)
        .join(" ");
      return `distribution ${payouts}`;
    }
    case "breakthrough":
      return `breakthrough ${payload["task_hash"]} by ${payload["submitter"]}`;
    default:
      return payload.kind;
  }
}
