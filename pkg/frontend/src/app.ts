/** DOM wiring for the demo page: one WebSocket session, one capture worker,
 * all state transitions routed through the session reducer. */

import { startCapture, type CaptureHandle } from "./capture.js";
import {
  getStatusFrame,
  openFrame,
  parseServerMessage,
  resetEnrollmentFrame,
  setThresholdFrame,
} from "./protocol.js";
import {
  applyServerMessage,
  connectionChanged,
  initialState,
  renderModel,
  thresholdDragged,
  type UiSessionState,
} from "./session.js";
import { TARGET_RATE } from "./resample.js";

let state: UiSessionState = initialState();
let socket: WebSocket | null = null;
let capture: CaptureHandle | null = null;

const el = (id: string) => document.getElementById(id)!;

function update(next: UiSessionState) {
  state = next;
  const model = renderModel(state);

  el("mode").textContent = model.modeBadge;
  el("mode").className = `badge mode-${model.modeBadge}`;
  el("connection").textContent = state.connection;

  const progress = el("progress") as HTMLProgressElement;
  progress.hidden = !model.showProgress;
  el("progress-label").hidden = !model.showProgress;
  if (model.showProgress) {
    progress.max = Math.max(model.progressCapacity, 1);
    progress.value = model.progressFilled;
    el("progress-label").textContent = `${model.progressFilled} / ${model.progressCapacity}`;
  }

  const verdict = el("verdict");
  verdict.hidden = !model.showVerdict;
  if (model.showVerdict) {
    verdict.textContent = model.verdictText;
    verdict.className = `badge ${model.verdictAccepted ? "accepted" : "rejected"}`;
  }

  if (model.thresholdDisplay !== null) {
    const slider = el("threshold") as HTMLInputElement;
    if (model.thresholdSettled) slider.value = String(model.thresholdDisplay);
    el("threshold-label").textContent = model.thresholdDisplay.toFixed(2);
  }

  el("log").textContent = model.logTail
    .map(
      (entry) =>
        `${entry.t.toFixed(2)}s  ${entry.label}` +
        (entry.sigma !== undefined ? `  σ=${entry.sigma.toFixed(3)}` : ""),
    )
    .join("\n");

  if (state.lastError) {
    el("error").hidden = false;
    el("error").textContent = state.lastError;
  } else {
    el("error").hidden = true;
  }
}

function connect() {
  update(connectionChanged(state, "connecting"));
  socket = new WebSocket(`ws://${location.host}/stream`);
  socket.onopen = () => {
    socket!.send(openFrame(TARGET_RATE));
    update(connectionChanged(state, "open"));
  };
  socket.onclose = () => {
    stopMic();
    update(connectionChanged(state, "closed"));
  };
  socket.onmessage = (event) => {
    if (typeof event.data !== "string") return;
    const message = parseServerMessage(event.data);
    if (message) update(applyServerMessage(state, message));
  };
}

function stopMic() {
  capture?.stop();
  capture = null;
  (el("mic") as HTMLButtonElement).textContent = "start microphone";
}

async function toggleMic() {
  if (capture) {
    stopMic();
    return;
  }
  try {
    capture = await startCapture(
      (chunk) => {
        if (socket?.readyState === WebSocket.OPEN) socket.send(chunk);
      },
      (dbfs) => {
        const meter = el("meter") as HTMLProgressElement;
        meter.value = Math.max(0, Math.min(60, dbfs + 60));
      },
    );
    (el("mic") as HTMLButtonElement).textContent = "stop microphone";
  } catch (err) {
    update({ ...state, lastError: `microphone unavailable: ${String(err)}` });
  }
}

function wire() {
  (el("mic") as HTMLButtonElement).onclick = () => void toggleMic();
  (el("reset") as HTMLButtonElement).onclick = () => {
    socket?.send(resetEnrollmentFrame());
  };
  const slider = el("threshold") as HTMLInputElement;
  slider.oninput = () => {
    update(thresholdDragged(state, Number(slider.value)));
  };
  slider.onchange = () => {
    update(thresholdDragged(state, Number(slider.value)));
    socket?.send(setThresholdFrame(Number(slider.value)));
    socket?.send(getStatusFrame());
  };
  connect();
}

document.addEventListener("DOMContentLoaded", wire);
