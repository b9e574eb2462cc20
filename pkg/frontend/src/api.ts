/** Gateway API client. Every domain number the studio renders comes out of
 * one of these responses; nothing is recomputed client-side.
 */

import type {
  ErrorEnvelope,
  LedgerRecordDoc,
  ManifestDoc,
  PathRecordDoc,
  PlanDoc,
  PlanResponse,
  TaskDoc,
  VersionRow,
} from "./types.js";

export class EnvelopeError extends Error {
  constructor(
    public readonly envelope: ErrorEnvelope,
    public readonly status: number,
  ) {
    super(`${envelope.code}: ${envelope.message}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface PlanOptions {
  weights?: { w_q: number; w_c: number; w_l: number };
  beamWidth?: number;
  candidates?: Record<string, string[]>;
}

export class StudioClient {
  constructor(
    private readonly base: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "X-SMIP-Protocol": "1" };
    if (body !== undefined) headers["Content-Type"] = "application/json; charset=utf-8";
    if (method !== "GET") headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (error) {
      throw new EnvelopeError(
        { code: "INTERNAL", message: `gateway unreachable: ${String(error)}` },
        0,
      );
    }
    const text = await response.text();
    let doc: unknown;
    try {
      doc = text ? JSON.parse(text) : {};
    } catch {
      doc = { code: "INTERNAL", message: text };
    }
    if (!response.ok) {
      throw new EnvelopeError(doc as ErrorEnvelope, response.status);
    }
    return doc as T;
  }

  healthz(): Promise<{ status: string; protocol: number }> {
    return this.request("GET", "/v1/healthz");
  }

  interpret(text: string): Promise<TaskDoc> {
    return this.request<{ task: TaskDoc }>("POST", "/v1/interpret", { text }).then((r) => r.task);
  }

  plan(task: TaskDoc, options: PlanOptions = {}): Promise<PlanResponse> {
    const body: Record<string, unknown> = { task };
    if (options.weights) body["weights"] = options.weights;
    if (options.beamWidth !== undefined) body["beam_width"] = options.beamWidth;
    if (options.candidates && Object.keys(options.candidates).length > 0) {
      body["candidates"] = options.candidates;
    }
    return this.request("POST", "/v1/plans", body);
  }

  execute(task: TaskDoc, plan: PlanDoc, inputB64 = ""): Promise<Record<string, unknown>> {
    return this.request("POST", "/v1/execute", { input_b64: inputB64, plan, task });
  }

  searchModels(query: string, limit = 20): Promise<ManifestDoc[]> {
    const qs = new URLSearchParams({ q: query, limit: String(limit) });
    return this.request<{ results: ManifestDoc[] }>("GET", `/v1/models?${qs}`).then(
      (r) => r.results,
    );
  }

  listVersions(name: string): Promise<VersionRow[]> {
    return this.request<{ name: string; versions: VersionRow[] }>(
      "GET",
      `/v1/models/${name}/versions`,
    ).then((r) => r.versions);
  }

  pathRecord(taskHash: string): Promise<PathRecordDoc | null> {
    return this.request<{ record: PathRecordDoc }>("GET", `/v1/paths/records/${taskHash}`)
      .then((r) => r.record)
      .catch((error) => {
        if (error instanceof EnvelopeError && error.envelope.code === "NOT_FOUND") return null;
        throw error;
      });
  }

  ledgerRecords(from = 0): Promise<LedgerRecordDoc[]> {
    return this.request<{ records: LedgerRecordDoc[] }>(
      "GET",
      `/v1/ledger/records?from=${from}`,
    ).then((r) => r.records);
  }

  balance(account: string): Promise<number> {
    return this.request<{ account: string; balance_ucr: number }>(
      "GET",
      `/v1/ledger/accounts/${account}/balance`,
    ).then((r) => r.balance_ucr);
  }
}
