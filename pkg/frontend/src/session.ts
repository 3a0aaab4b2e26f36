/** UI session state: a pure reducer over server messages plus a derived
 * render model. All display rules live here so they are testable without a
 * DOM: the rendered mode always mirrors the last status frame, verdicts are
 * never shown while enrolling, the event log stays bounded, and a slider
 * move reconciles with the server within one status round-trip. */

import type { ServerMessage, EventMessage } from "./protocol.js";

export const LOG_LIMIT = 200;

export interface LogEntry {
  t: number;
  x: 0 | 1 | 2;
  label: string;
  sigma?: number;
}

export interface UiSessionState {
  connection: "idle" | "connecting" | "open" | "closed";
  mode: "enrolling" | "inferring" | null;
  filled: number;
  capacity: number;
  threshold: number | null; // last server-acknowledged value
  pendingThreshold: number | null; // slider value awaiting acknowledgement
  lastVerdict: { x: 1 | 2; sigma?: number; t: number } | null;
  log: LogEntry[];
  lastError: string | null;
}

export function initialState(): UiSessionState {
  return {
    connection: "idle",
    mode: null,
    filled: 0,
    capacity: 0,
    threshold: null,
    pendingThreshold: null,
    lastVerdict: null,
    log: [],
    lastError: null,
  };
}

export function connectionChanged(
  state: UiSessionState,
  connection: UiSessionState["connection"],
): UiSessionState {
  return { ...state, connection };
}

export function thresholdDragged(state: UiSessionState, value: number): UiSessionState {
  return { ...state, pendingThreshold: value };
}

function eventLabel(event: EventMessage): string {
  if (event.detail.enrollment) {
    const { filled, capacity } = event.detail.enrollment;
    return `enrolled ${filled}/${capacity}`;
  }
  if (event.detail.refractory) return "refractory";
  if (event.x === 2) return "accepted";
  if (event.x === 1) return "rejected";
  return event.detail.ks_class ?? "quiet";
}

export function applyServerMessage(
  state: UiSessionState,
  message: ServerMessage,
): UiSessionState {
  switch (message.kind) {
    case "status": {
      const modeChanged = state.mode !== message.mode;
      const acknowledged =
        state.pendingThreshold !== null &&
        Math.abs(message.threshold - state.pendingThreshold) < 1e-6;
      return {
        ...state,
        mode: message.mode,
        filled: message.filled,
        capacity: message.capacity,
        threshold: message.threshold,
        pendingThreshold: acknowledged ? null : state.pendingThreshold,
        // A flip back to enrolling (reset) must not leave a stale verdict up.
        lastVerdict: modeChanged && message.mode === "enrolling" ? null : state.lastVerdict,
      };
    }
    case "event": {
      const entry: LogEntry = {
        t: message.t,
        x: message.x,
        label: eventLabel(message),
        sigma: message.detail.sigma,
      };
      const log = [...state.log, entry].slice(-LOG_LIMIT);
      const next: UiSessionState = { ...state, log };
      if (message.detail.enrollment) {
        next.filled = message.detail.enrollment.filled;
        next.capacity = message.detail.enrollment.capacity;
        if (message.detail.enrollment.complete) next.mode = "inferring";
      }
      if (message.x === 1 || message.x === 2) {
        next.lastVerdict = { x: message.x, sigma: message.detail.sigma, t: message.t };
      }
      return next;
    }
    case "error":
      return { ...state, lastError: message.message };
  }
}

export interface RenderModel {
  modeBadge: string;
  showProgress: boolean;
  progressFilled: number;
  progressCapacity: number;
  showVerdict: boolean;
  verdictText: string;
  verdictAccepted: boolean;
  thresholdDisplay: number | null;
  thresholdSettled: boolean;
  logTail: LogEntry[];
}

export function renderModel(state: UiSessionState): RenderModel {
  const enrolling = state.mode === "enrolling";
  const verdict = state.lastVerdict;
  const showVerdict = !enrolling && state.mode !== null && verdict !== null;
  return {
    modeBadge: state.mode ?? "disconnected",
    showProgress: enrolling,
    progressFilled: state.filled,
    progressCapacity: state.capacity,
    showVerdict,
    verdictText: verdict
      ? `${verdict.x === 2 ? "accepted" : "rejected"}${
          verdict.sigma !== undefined ? ` (similarity ${verdict.sigma.toFixed(3)})` : ""
        }`
      : "",
    verdictAccepted: verdict?.x === 2,
    thresholdDisplay: state.pendingThreshold ?? state.threshold,
    thresholdSettled: state.pendingThreshold === null,
    logTail: state.log.slice(-12),
  };
}
