// Pure view model: every piece of rendered state is derived from server
// messages, never mutated locally. Clearing and re-feeding the same snapshot
// reproduces the identical model, which keeps the front/back state honest.

import type {
  ChecklistDoc,
  ChecklistState,
  FacetState,
  Guidance,
  Modality,
  ServerMessage,
} from "./protocol.js";

export interface ControlView {
  id: string;
  kind: string;
  value: unknown;
  highlighted: boolean;
}

export interface GuidanceView {
  popupText: string | null; // text modality
  highlightTarget: string | null; // visual modality
  utterance: string | null; // audio modality: pending speech
  load: string | null;
  source: string | null;
}

export interface DashboardView {
  visible: boolean;
  audible: boolean; // edge-triggered alert pending playback
  expectedStepId: string | null;
  expectedControl: string | null;
  instruction: string | null;
}

export interface LanePoint {
  t_ns: number;
  state: FacetState;
}

export interface ViewState {
  phase: "start" | "running" | "ended";
  condition: string | null;
  checklist: ChecklistDoc | null;
  snapshot: ChecklistState | null;
  controls: ControlView[];
  guidance: GuidanceView;
  dashboard: DashboardView;
  lanes: Record<"memory" | "attention" | "perception", LanePoint[]>;
  lastViolation: string | null;
  metrics: Record<string, unknown> | null;
}

export function emptyGuidance(): GuidanceView {
  return { popupText: null, highlightTarget: null, utterance: null, load: null, source: null };
}

export function initialState(): ViewState {
  return {
    phase: "start",
    condition: null,
    checklist: null,
    snapshot: null,
    controls: [],
    guidance: emptyGuidance(),
    dashboard: { visible: false, audible: false, expectedStepId: null, expectedControl: null, instruction: null },
    lanes: { memory: [], attention: [], perception: [] },
    lastViolation: null,
    metrics: null,
  };
}

export function activeEffects(g: GuidanceView): Set<Modality> {
  const effects = new Set<Modality>();
  if (g.highlightTarget !== null) effects.add("visual");
  if (g.utterance !== null) effects.add("audio");
  if (g.popupText !== null) effects.add("text");
  return effects;
}

function controlsFrom(state: ViewState): ControlView[] {
  if (!state.checklist) return [];
  const highlight = state.guidance.highlightTarget;
  // Control values come from completed steps only; the panel never guesses.
  const values = new Map<string, unknown>();
  for (const c of state.checklist.controls) values.set(c.id, c.initial);
  if (state.snapshot) {
    for (const proc of state.checklist.procedures) {
      for (const step of proc.steps) {
        if (state.snapshot.status[step.id] === "done") {
          values.set(step.target_control, step.expected_value);
        }
      }
    }
  }
  return state.checklist.controls.map((c) => ({
    id: c.id,
    kind: c.kind,
    value: values.get(c.id),
    highlighted: highlight === c.id,
  }));
}

export class ConsoleViewModel {
  state: ViewState = initialState();
  // action in flight: suppress duplicate sends until the next snapshot
  private pendingAction: string | null = null;

  apply(msg: ServerMessage): ViewState {
    const s = this.state;
    switch (msg.type) {
      case "session_started": {
        const fresh = initialState();
        fresh.phase = "running";
        fresh.condition = msg.condition;
        fresh.checklist = msg.checklist;
        this.state = fresh;
        break;
      }
      case "checklist_state": {
        s.snapshot = msg;
        this.pendingAction = null;
        // a completed correction clears the dashboard
        const hasError = Object.values(msg.status).includes("error");
        if (!hasError) {
          s.dashboard = { ...s.dashboard, visible: false, audible: false };
        }
        // guidance for a superseded step is stale once the step advances
        if (
          s.guidance.highlightTarget !== null &&
          msg.active_target_control !== s.guidance.highlightTarget
        ) {
          s.guidance = emptyGuidance();
        }
        break;
      }
      case "guidance": {
        if (s.condition === "baseline") break; // baseline mounts no guidance
        s.guidance = guidanceView(msg);
        break;
      }
      case "error_alert": {
        s.dashboard = {
          visible: true,
          audible: msg.alert,
          expectedStepId: msg.expected_step_id,
          expectedControl: msg.expected_control,
          instruction: msg.corrective_instruction,
        };
        break;
      }
      case "workload": {
        for (const facet of ["memory", "attention", "perception"] as const) {
          s.lanes[facet].push({
            t_ns: msg.timestamp_ns,
            state: msg.vector[facet].state,
          });
        }
        break;
      }
      case "session_ended": {
        s.phase = "ended";
        s.metrics = msg.metrics;
        s.guidance = emptyGuidance();
        break;
      }
      case "protocol_violation": {
        s.lastViolation = msg.reason;
        break;
      }
      case "heartbeat":
        break;
    }
    this.state.controls = controlsFrom(this.state);
    return this.state;
  }

  // Operator interaction: returns the action to send, or null when the click
  // is a duplicate of the in-flight action (double-click debounce) or the
  // session is not running.
  operate(controlId: string, value: unknown): { control_id: string; value: unknown } | null {
    if (this.state.phase !== "running") return null;
    const key = `${controlId}=${JSON.stringify(value)}`;
    if (this.pendingAction === key) return null;
    this.pendingAction = key;
    return { control_id: controlId, value };
  }

  consumeUtterance(): string | null {
    const text = this.state.guidance.utterance;
    this.state.guidance = { ...this.state.guidance, utterance: null };
    return text;
  }

  consumeAudibleAlert(): boolean {
    const pending = this.state.dashboard.audible;
    this.state.dashboard = { ...this.state.dashboard, audible: false };
    return pending;
  }

  reset(): void {
    this.state = initialState();
    this.pendingAction = null;
  }
}

export function guidanceView(msg: Guidance): GuidanceView {
  const mods = new Set(msg.modalities);
  return {
    popupText: mods.has("text") ? msg.message_text : null,
    highlightTarget: mods.has("visual") ? msg.visual_target : null,
    utterance: mods.has("audio") ? msg.message_text : null,
    load: msg.load,
    source: msg.source,
  };
}
