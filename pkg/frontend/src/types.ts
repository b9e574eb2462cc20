/** Wire document shapes shared with the gateway. */

export type NodeKind = "INPUT" | "OUTPUT" | "PROCESS" | "MODEL_CALL";

export interface PlainNodeDoc {
  id: string;
  kind: "INPUT" | "OUTPUT";
}

export interface WorkNodeDoc {
  id: string;
  kind: "PROCESS" | "MODEL_CALL";
  required_tags: string[];
  difficulty: number;
  novel: boolean;
  rationale: string;
}

export type NodeDoc = PlainNodeDoc | WorkNodeDoc;

export interface WorkflowDoc {
  edges: [string, string][];
  name: string;
  nodes: Record<string, NodeDoc>;
}

export interface SubtaskDoc {
  difficulty: number;
  novel: boolean;
  required_tags: string[];
}

export interface TaskDoc {
  budget_ucr: number | null;
  deadline_ms: number | null;
  deps: [string, string][];
  subtasks: Record<string, SubtaskDoc>;
  task_hash: string;
}

export interface UtilityDoc {
  cost_ucr: number;
  feasible: boolean;
  latency_ms: number;
  quality: number;
  utility: number;
}

export interface PlanDoc {
  assignment: Record<string, [string, number]>;
  rationale: Record<string, string>;
  task_hash: string;
  utility: UtilityDoc;
}

export interface BreakthroughDoc {
  new_utility: number;
  old_utility: number | null;
  submitter: string;
  task_hash: string;
}

export interface PathRecordDoc {
  best_utility: number;
  holder_plan: PlanDoc;
  set_at: number;
  submitter: string;
  task_hash: string;
}

export interface PlanResponse {
  breakthrough: BreakthroughDoc | null;
  cached: boolean;
  plan: PlanDoc;
  record: PathRecordDoc | null;
}

export interface ManifestDoc {
  blob_hash: string;
  capabilities: Record<string, number>;
  changelog: string;
  cost_per_call: number;
  created_at: number;
  designer_account: string;
  env: { dependencies: [string, string][]; lock_digest: string };
  latency_ms: number;
  name: string;
  size_bytes: number;
  version: number;
}

export interface VersionRow {
  changelog: string;
  created_at: number;
  version: number;
}

export interface LedgerRecordDoc {
  hash: string;
  index: number;
  payload: Record<string, unknown> & { kind: string };
  prev_hash: string;
  timestamp: number;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  detail?: unknown;
}

export const GENESIS_HASH = "0".repeat(64);
