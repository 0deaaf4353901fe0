// DOM rendering of the view model. The renderer is write-only: it never
// feeds state back into the model, so the model stays server-authoritative.

import type { ViewState } from "./viewModel.js";
import type { ChecklistDoc } from "./protocol.js";

export interface RenderCallbacks {
  onOperate: (controlId: string, value: unknown) => void;
  onGaze: (controlId: string | null) => void;
  onDismissPopup: () => void;
}

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function candidateValues(checklist: ChecklistDoc, controlId: string): unknown[] {
  const values: unknown[] = [];
  for (const proc of checklist.procedures) {
    for (const step of proc.steps) {
      if (step.target_control === controlId && !values.includes(step.expected_value)) {
        values.push(step.expected_value);
      }
    }
  }
  if (!values.includes("OFF")) values.push("OFF");
  return values;
}

export function render(root: HTMLElement, state: ViewState, cb: RenderCallbacks): void {
  root.querySelector(".console")?.remove();
  const wrap = el("div", "console");

  if (state.phase === "start") {
    root.appendChild(wrap);
    return; // the start screen is static HTML; nothing to render yet
  }

  // session header
  const header = el("div", "header");
  header.appendChild(el("span", "condition", `condition: ${state.condition}`));
  if (state.snapshot) {
    header.appendChild(
      el("span", "progress",
         `${state.snapshot.done_count}/${state.snapshot.total_steps} steps`)
    );
  }
  if (state.lastViolation) {
    header.appendChild(el("span", "violation", state.lastViolation));
  }
  wrap.appendChild(header);

  // checklist strip
  if (state.checklist && state.snapshot) {
    const strip = el("div", "checklist");
    for (const proc of state.checklist.procedures) {
      const procBox = el("div", "procedure");
      procBox.appendChild(el("div", "proc-title", `${proc.id} ${proc.title}`));
      for (const step of proc.steps) {
        const status = state.snapshot.status[step.id];
        const row = el("div", `step step-${status}`, `${step.id} ${step.instruction}`);
        procBox.appendChild(row);
      }
      strip.appendChild(procBox);
    }
    wrap.appendChild(strip);
  }

  // control panel
  if (state.checklist) {
    const panel = el("div", "panel");
    for (const control of state.controls) {
      const row = el("div", control.highlighted ? "control highlighted" : "control");
      row.addEventListener("mouseenter", () => cb.onGaze(control.id));
      row.addEventListener("mouseleave", () => cb.onGaze(null));
      row.appendChild(el("span", "control-id", control.id));
      row.appendChild(el("span", "control-value", String(control.value)));
      if (control.highlighted) {
        row.appendChild(el("span", "pointer", "-> here")); // the "ghost hand"
      }
      for (const value of candidateValues(state.checklist, control.id)) {
        const btn = el("button", "value-btn", String(value));
        btn.addEventListener("click", () => cb.onOperate(control.id, value));
        row.appendChild(btn);
      }
      panel.appendChild(row);
    }
    wrap.appendChild(panel);
  }

  // guidance surfaces (never mounted in baseline: the model keeps them empty)
  if (state.guidance.popupText !== null) {
    const popup = el("div", "popup");
    popup.appendChild(el("div", "popup-text", state.guidance.popupText));
    const dismiss = el("button", "dismiss", "dismiss");
    dismiss.addEventListener("click", () => cb.onDismissPopup());
    popup.appendChild(dismiss);
    wrap.appendChild(popup);
  }

  // error dashboard: appears only on alert
  if (state.dashboard.visible) {
    const dash = el("div", "dashboard");
    dash.appendChild(el("div", "dash-title", "ERROR - consult dashboard"));
    dash.appendChild(
      el("div", "dash-body",
         `expected ${state.dashboard.expectedStepId}: ${state.dashboard.instruction}`)
    );
    wrap.appendChild(dash);
  }

  // workload strip: three color-coded lanes
  const lanes = el("div", "lanes");
  for (const facet of ["memory", "attention", "perception"] as const) {
    const lane = el("div", "lane");
    lane.appendChild(el("span", "lane-label", facet));
    const track = el("span", "lane-track");
    for (const point of state.lanes[facet].slice(-240)) {
      track.appendChild(el("i", `seg seg-${point.state}`));
    }
    lane.appendChild(track);
    lanes.appendChild(lane);
  }
  wrap.appendChild(lanes);

  if (state.phase === "ended" && state.metrics) {
    const done = el("div", "ended");
    done.appendChild(el("div", "dash-title", "session ended"));
    done.appendChild(el("pre", "metrics", JSON.stringify(state.metrics, null, 1)));
    wrap.appendChild(done);
  }

  root.appendChild(wrap);
}
