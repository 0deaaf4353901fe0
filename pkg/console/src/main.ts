// Wiring: start screen -> session socket -> view model -> renderer/speech.

import { SessionSocket } from "./socket.js";
import { ConsoleViewModel } from "./viewModel.js";
import { render } from "./render.js";
import { Speech } from "./speech.js";

const root = document.getElementById("app")!;
const startForm = document.getElementById("start-form") as HTMLFormElement;
const offlineBanner = document.getElementById("offline")!;

const model = new ConsoleViewModel();
const speech = new Speech();
const socket = new SessionSocket(
  `${location.origin.replace(/^http/, "ws")}/session`
);

function redraw(): void {
  render(root, model.state, {
    onOperate: (controlId, value) => {
      const action = model.operate(controlId, value);
      if (action) socket.send({ type: "action", ...action });
    },
    onGaze: (controlId) => {
      socket.send({ type: "gaze", control_id: controlId });
    },
    onDismissPopup: () => {
      model.state.guidance = { ...model.state.guidance, popupText: null };
      redraw();
    },
  });
}

socket.onMessage = (msg) => {
  model.apply(msg);
  const utterance = model.consumeUtterance();
  if (utterance) speech.speak(utterance);
  if (model.consumeAudibleAlert()) speech.alertTone();
  if (msg.type !== "heartbeat") redraw();
};
socket.onOffline = () => {
  offlineBanner.hidden = false;
  setTimeout(() => socket.connect(), 1000);
};
socket.onOnline = () => {
  offlineBanner.hidden = true;
};

startForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const data = new FormData(startForm);
  speech.muted = data.get("muted") === "on";
  const config: Record<string, unknown> = {
    condition: data.get("condition") || "adaptive",
    seed: Number(data.get("seed") || 1),
    agent: {
      expertise: "novice",
      base_error_prob: 0,
      latency_mean_s: 2,
      latency_sigma: 0.3,
      guidance_error_mult: 0.5,
      guidance_latency_mult: 0.8,
    },
    late_prob: data.get("lag") === "on" ? 0.05 : 0.0,
  };
  socket.send({ type: "start_session", config });
  startForm.hidden = true;
});

socket.connect();
redraw();
