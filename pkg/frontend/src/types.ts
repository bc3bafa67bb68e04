/** Wire types for the orchestration service HTTP API. */

export interface ContextKeyRef {
  type: string;
  key: string;
}

export interface PlanStepDoc {
  index: number; // 1-based
  capability: string;
  objective: string;
  inputs: ContextKeyRef[];
  output: ContextKeyRef;
  success_criteria: string;
}

export interface PlanDoc {
  plan_id: string;
  task_hash: string;
  revision: number;
  approved: boolean;
  created_at: string;
  steps: PlanStepDoc[];
}

export interface Defect {
  kind: string;
  detail: string;
  step_index: number | null;
}

export interface InterruptRecord {
  interrupt_id: string;
  session_id: string;
  kind: string; // plan_approval | step_approval | memory_write
  payload: Record<string, unknown>;
  raised_at: string;
}

export interface SessionRecord {
  session_id: string;
  user_id: string;
  status: string;
  plan_id: string | null;
  revision: number | null;
  cursor: number;
  pending_interrupt: InterruptRecord | null;
  abort_reason: string | null;
}

export interface FeedEvent {
  sequence: number;
  kind: string;
  step_index: number | null;
  payload: Record<string, unknown>;
  timestamp: string;
}

export interface ArtifactRecord {
  artifact_id: string;
  session_id: string;
  step_index: number;
  kind: string;
  media_type: string;
  bytes_ref: string;
  label: string;
  created_at: string;
}

export const TERMINAL_STATUSES = ["completed", "aborted"];
export const TERMINAL_EVENT_KINDS = ["session_completed", "session_aborted"];
