// Wire types for the gateway /session socket (see docs/message_schemas.md).

export type Modality = "visual" | "audio" | "text";
export type Load = "essential" | "standard" | "comprehensive";
export type FacetState = "underload" | "optimal" | "overload";
export type Condition = "baseline" | "random" | "adaptive";

export interface ControlSpec {
  id: string;
  kind: string;
  initial: unknown;
}

export interface StepSpec {
  id: string;
  instruction: string;
  target_control: string;
  expected_value: unknown;
  messages: { command: string; context: string; environment: string };
}

export interface ChecklistDoc {
  name: string;
  controls: ControlSpec[];
  procedures: { id: string; title: string; steps: StepSpec[] }[];
}

export interface SessionStarted {
  type: "session_started";
  condition: Condition;
  calibration_s: number;
  sample_rate_hz: number;
  checklist: ChecklistDoc;
}

export interface ChecklistState {
  type: "checklist_state";
  active_step_id: string | null;
  active_procedure_id: string | null;
  active_instruction: string | null;
  active_target_control: string | null;
  active_expected_value: unknown;
  done_count: number;
  total_steps: number;
  status: Record<string, "pending" | "active" | "done" | "error">;
  complete: boolean;
  timestamp_ns: number;
}

export interface Guidance {
  type: "guidance";
  timestamp_ns: number;
  modalities: Modality[];
  load: Load;
  message_text: string;
  visual_target: string | null;
  reasoning: string;
  source: string;
  step_id?: string;
}

export interface ErrorAlert {
  type: "error_alert";
  timestamp_ns: number;
  expected_step_id: string;
  expected_control: string;
  corrective_instruction: string;
  alert: boolean;
}

export interface WorkloadMsg {
  type: "workload";
  timestamp_ns: number;
  vector: {
    timestamp_ns: number;
    memory: { state: FacetState; confidence: number };
    attention: { state: FacetState; confidence: number };
    perception: { state: FacetState; confidence: number };
  };
  summary: Partial<Record<"memory" | "attention" | "perception", FacetState>>;
}

export interface SessionEnded {
  type: "session_ended";
  metrics: Record<string, unknown>;
  completed: boolean;
}

export interface Heartbeat {
  type: "heartbeat";
}

export interface ProtocolViolation {
  type: "protocol_violation";
  reason: string;
}

export type ServerMessage =
  | SessionStarted
  | ChecklistState
  | Guidance
  | ErrorAlert
  | WorkloadMsg
  | SessionEnded
  | Heartbeat
  | ProtocolViolation;

export type ClientMessage =
  | { type: "start_session"; config: Record<string, unknown> }
  | { type: "action"; control_id: string; value: unknown }
  | { type: "gaze"; control_id: string | null }
  | { type: "ack_error"; event_id: number | null }
  | { type: "pause" }
  | { type: "resume" };

const SERVER_TYPES = new Set([
  "session_started",
  "checklist_state",
  "guidance",
  "error_alert",
  "workload",
  "session_ended",
  "heartbeat",
  "protocol_violation",
]);

export function parseServerMessage(raw: string): ServerMessage {
  const obj = JSON.parse(raw);
  if (!obj || typeof obj !== "object" || !SERVER_TYPES.has(obj.type)) {
    throw new Error(`unknown server message: ${raw.slice(0, 80)}`);
  }
  return obj as ServerMessage;
}

export function serialize(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
