/** Session state machine: start -> training x50 -> test x100 -> results.
 *
 * The server owns all experiment logic; this reducer only mirrors it.
 * Feedback fields are representable only in the training phase, so the
 * test phase cannot leak correctness by construction.
 */

import type { ResultsPayload, TrainingFeedback, TrialView } from "./api.js";

export type Screen = "start" | "trial" | "results";

export interface UiSessionState {
  screen: Screen;
  sessionId: string | null;
  phase: "training" | "test" | null;
  trialIndex: number;
  nTraining: number;
  nTest: number;
  imageUrl: string | null;
  lastFeedback: TrainingFeedback | null;
  results: ResultsPayload | null;
}

export function initialState(): UiSessionState {
  return {
    screen: "start",
    sessionId: null,
    phase: null,
    trialIndex: 0,
    nTraining: 0,
    nTest: 0,
    imageUrl: null,
    lastFeedback: null,
    results: null,
  };
}

export function sessionStarted(
  state: UiSessionState,
  sessionId: string,
  nTraining: number,
  nTest: number,
): UiSessionState {
  if (state.screen !== "start") {
    throw new Error(`cannot start a session from screen ${state.screen}`);
  }
  return { ...state, screen: "trial", sessionId, nTraining, nTest };
}

export function trialLoaded(state: UiSessionState, trial: TrialView): UiSessionState {
  if (state.screen !== "trial") {
    throw new Error(`cannot load a trial on screen ${state.screen}`);
  }
  return {
    ...state,
    phase: trial.phase,
    trialIndex: trial.trial_index,
    nTraining: trial.n_training,
    nTest: trial.n_test,
    imageUrl: trial.image_url,
  };
}

export function answered(
  state: UiSessionState,
  feedback: TrainingFeedback | Record<string, never>,
): UiSessionState {
  if (state.screen !== "trial" || state.phase === null) {
    throw new Error("no pending trial to answer");
  }
  const isTraining = state.phase === "training";
  const fb = isTraining && "correct" in feedback ? (feedback as TrainingFeedback) : null;
  return { ...state, lastFeedback: fb };
}

export function feedbackDismissed(state: UiSessionState): UiSessionState {
  return { ...state, lastFeedback: null };
}

export function sessionCompleted(
  state: UiSessionState,
  results: ResultsPayload,
): UiSessionState {
  return { ...state, screen: "results", phase: null, results, lastFeedback: null };
}

/** "trial i of N" uses per-phase numbering: 1..50 then 1..100. */
export function progressLabel(state: UiSessionState): string {
  if (state.phase === "training") {
    return `training trial ${state.trialIndex + 1} of ${state.nTraining}`;
  }
  if (state.phase === "test") {
    return `test trial ${state.trialIndex - state.nTraining + 1} of ${state.nTest}`;
  }
  return "";
}
