import { describe, expect, it } from "vitest";

import type { TrialView } from "../src/api.js";
import {
  answered,
  feedbackDismissed,
  initialState,
  progressLabel,
  sessionCompleted,
  sessionStarted,
  trialLoaded,
} from "../src/state.js";

const trial = (index: number, phase: "training" | "test"): TrialView => ({
  trial_index: index,
  phase,
  image_url: `/api/image/test-00001/0`,
  n_training: 50,
  n_test: 100,
});

const results = {
  subject_accuracy: 0.62,
  subject_accuracy_ci: 0.049,
  per_size: {},
  model_accuracy: 0.8,
  model_accuracy_ci: 0.04,
  human_model_correlation: 0.5,
  model_roc: { points: [[0, 0], [1, 1]] as [number, number][], auc: 0.5 },
  n_test: 100,
};

describe("state machine", () => {
  it("walks start -> training -> test -> results", () => {
    let s = initialState();
    expect(s.screen).toBe("start");
    s = sessionStarted(s, "sid", 50, 100);
    expect(s.screen).toBe("trial");
    s = trialLoaded(s, trial(0, "training"));
    expect(s.phase).toBe("training");
    s = trialLoaded(s, trial(50, "test"));
    expect(s.phase).toBe("test");
    s = sessionCompleted(s, results);
    expect(s.screen).toBe("results");
    expect(s.results?.subject_accuracy).toBe(0.62);
  });

  it("rejects starting twice", () => {
    const s = sessionStarted(initialState(), "sid", 50, 100);
    expect(() => sessionStarted(s, "other", 50, 100)).toThrow();
  });

  it("keeps training feedback and drops it on dismiss", () => {
    let s = sessionStarted(initialState(), "sid", 50, 100);
    s = trialLoaded(s, trial(3, "training"));
    s = answered(s, { correct: true, outcome_image: "/api/image/x/4" });
    expect(s.lastFeedback).toEqual({ correct: true, outcome_image: "/api/image/x/4" });
    s = feedbackDismissed(s);
    expect(s.lastFeedback).toBeNull();
  });

  it("never exposes feedback during the test phase", () => {
    let s = sessionStarted(initialState(), "sid", 50, 100);
    s = trialLoaded(s, trial(51, "test"));
    s = answered(s, {});
    expect(s.lastFeedback).toBeNull();
    // even a malicious payload with feedback fields is ignored in test phase
    s = answered(s, { correct: true, outcome_image: "x" } as never);
    expect(s.lastFeedback).toBeNull();
  });

  it("labels progress per phase", () => {
    let s = sessionStarted(initialState(), "sid", 50, 100);
    s = trialLoaded(s, trial(0, "training"));
    expect(progressLabel(s)).toBe("training trial 1 of 50");
    s = trialLoaded(s, trial(49, "training"));
    expect(progressLabel(s)).toBe("training trial 50 of 50");
    s = trialLoaded(s, trial(50, "test"));
    expect(progressLabel(s)).toBe("test trial 1 of 100");
    s = trialLoaded(s, trial(149, "test"));
    expect(progressLabel(s)).toBe("test trial 100 of 100");
  });

  it("refuses answers without a pending trial", () => {
    expect(() => answered(initialState(), {})).toThrow();
  });
});
