import { describe, expect, it } from "vitest";

import type { EventMessage, StatusMessage } from "../src/protocol.js";
import {
  applyServerMessage,
  initialState,
  LOG_LIMIT,
  renderModel,
  thresholdDragged,
} from "../src/session.js";

const status = (overrides: Partial<StatusMessage> = {}): StatusMessage => ({
  kind: "status",
  mode: "enrolling",
  filled: 0,
  capacity: 16,
  threshold: 0.8,
  windows_processed: 0,
  gate_opens: 0,
  dvector_invocations: 0,
  memory: null,
  ...overrides,
});

const event = (x: 0 | 1 | 2, detail: EventMessage["detail"] = {}, t = 1.0): EventMessage => ({
  kind: "event",
  x,
  t,
  detail,
});

describe("mode rendering", () => {
  it("mirrors the last status frame", () => {
    let state = applyServerMessage(initialState(), status({ mode: "enrolling" }));
    expect(renderModel(state).modeBadge).toBe("enrolling");
    state = applyServerMessage(state, status({ mode: "inferring", filled: 16 }));
    expect(renderModel(state).modeBadge).toBe("inferring");
  });

  it("never shows a verdict while enrolling", () => {
    let state = applyServerMessage(initialState(), status({ mode: "inferring", filled: 16 }));
    state = applyServerMessage(state, event(2, { sigma: 0.93 }));
    expect(renderModel(state).showVerdict).toBe(true);

    // Reset flips the server back to enrolling; the stale verdict must hide.
    state = applyServerMessage(state, status({ mode: "enrolling", filled: 0 }));
    const model = renderModel(state);
    expect(model.showVerdict).toBe(false);
    expect(model.showProgress).toBe(true);
  });
});

describe("verdict badges", () => {
  it("renders accepted with the similarity value", () => {
    let state = applyServerMessage(initialState(), status({ mode: "inferring", filled: 16 }));
    state = applyServerMessage(state, event(2, { sigma: 0.93 }));
    const model = renderModel(state);
    expect(model.verdictAccepted).toBe(true);
    expect(model.verdictText).toContain("accepted");
    expect(model.verdictText).toContain("0.930");
  });

  it("a raised threshold turns the next low-similarity event into a rejection", () => {
    let state = applyServerMessage(initialState(), status({ mode: "inferring", filled: 16 }));
    state = thresholdDragged(state, 0.95);
    state = applyServerMessage(state, status({ mode: "inferring", threshold: 0.95 }));
    state = applyServerMessage(state, event(1, { sigma: 0.93 }));
    const model = renderModel(state);
    expect(model.verdictAccepted).toBe(false);
    expect(model.verdictText).toContain("rejected");
  });
});

describe("enrollment progress", () => {
  it("tracks fill events and flips on completion", () => {
    let state = applyServerMessage(initialState(), status({ mode: "enrolling" }));
    state = applyServerMessage(
      state,
      event(0, { enrollment: { filled: 7, capacity: 16 } }),
    );
    let model = renderModel(state);
    expect(model.showProgress).toBe(true);
    expect(model.progressFilled).toBe(7);
    expect(model.progressCapacity).toBe(16);

    state = applyServerMessage(
      state,
      event(0, { enrollment: { filled: 16, capacity: 16, complete: true } }),
    );
    model = renderModel(state);
    expect(model.modeBadge).toBe("inferring");
    expect(model.showProgress).toBe(false);
  });
});

describe("threshold reconciliation", () => {
  it("settles within one status round-trip", () => {
    let state = applyServerMessage(initialState(), status());
    state = thresholdDragged(state, 0.95);
    expect(renderModel(state).thresholdSettled).toBe(false);
    expect(renderModel(state).thresholdDisplay).toBeCloseTo(0.95);

    state = applyServerMessage(state, status({ threshold: 0.95 }));
    expect(renderModel(state).thresholdSettled).toBe(true);
    expect(renderModel(state).thresholdDisplay).toBeCloseTo(0.95);
    expect(state.threshold).toBeCloseTo(0.95);
  });

  it("stays pending if the server acknowledges a different value", () => {
    let state = applyServerMessage(initialState(), status());
    state = thresholdDragged(state, 0.95);
    state = applyServerMessage(state, status({ threshold: 0.8 }));
    expect(renderModel(state).thresholdSettled).toBe(false);
  });
});

describe("event log", () => {
  it("is bounded", () => {
    let state = applyServerMessage(initialState(), status({ mode: "inferring", filled: 16 }));
    for (let k = 0; k < LOG_LIMIT + 50; k++) {
      state = applyServerMessage(state, event(0, { ks_class: "silence" }, k * 0.25));
    }
    expect(state.log.length).toBe(LOG_LIMIT);
    expect(state.log[0].t).toBeCloseTo(50 * 0.25);
  });

  it("labels enrollment and verdict entries", () => {
    let state = applyServerMessage(initialState(), status());
    state = applyServerMessage(state, event(0, { enrollment: { filled: 3, capacity: 16 } }));
    state = applyServerMessage(state, status({ mode: "inferring", filled: 16 }));
    state = applyServerMessage(state, event(1, { sigma: 0.4 }));
    expect(state.log.map((entry) => entry.label)).toEqual(["enrolled 3/16", "rejected"]);
  });
});

describe("errors", () => {
  it("records the last error message", () => {
    const state = applyServerMessage(initialState(), {
      kind: "error",
      message: "another audio session is already active",
    });
    expect(state.lastError).toContain("already active");
  });
});
