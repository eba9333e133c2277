/** Controller: wires the API client, state machine, and renderers. */

import { ApiClient, ApiError } from "./api.js";
import {
  answered,
  feedbackDismissed,
  initialState,
  sessionCompleted,
  sessionStarted,
  trialLoaded,
  type UiSessionState,
} from "./state.js";
import {
  renderResultsScreen,
  renderRetryBanner,
  renderStartScreen,
  renderTrialScreen,
} from "./ui.js";

const STORAGE_KEY = "blocktower-session-id";

class Controller {
  private state: UiSessionState = initialState();
  private busy = false;

  constructor(private root: HTMLElement, private api: ApiClient) {}

  render(): void {
    if (this.state.screen === "start") {
      renderStartScreen(this.root, { onBegin: (label, seed) => this.begin(label, seed) });
    } else if (this.state.screen === "trial") {
      renderTrialScreen(this.root, this.state, {
        onAnswer: (p) => this.answer(p),
        onContinue: () => this.advance(),
      }, this.busy);
    } else {
      renderResultsScreen(this.root, this.state.results);
    }
  }

  private fail(message: string, retry: () => void): void {
    this.busy = false;
    this.render();
    renderRetryBanner(this.root, message, retry);
  }

  async begin(label: string, seed: number | undefined): Promise<void> {
    try {
      const info = await this.api.createSession(label, seed);
      sessionStorage.setItem(STORAGE_KEY, info.session_id);
      this.state = sessionStarted(this.state, info.session_id, info.n_training, info.n_test);
      await this.loadTrial();
    } catch (err) {
      this.fail(String(err), () => this.begin(label, seed));
    }
  }

  async resume(sessionId: string): Promise<void> {
    this.state = sessionStarted(initialState(), sessionId, 0, 0);
    await this.loadTrial();
  }

  async loadTrial(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) {
      return;
    }
    try {
      const trial = await this.api.getTrial(sid);
      this.state = trialLoaded(this.state, trial);
      this.render();
    } catch (err) {
      if (err instanceof ApiError && err.status === 410) {
        await this.showResults();
        return;
      }
      this.fail(String(err), () => this.loadTrial());
    }
  }

  async answer(prediction: "fall" | "stay"): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid || this.busy) {
      return;
    }
    this.busy = true;
    this.render();
    try {
      const feedback = await this.api.postResponse(sid, prediction, this.state.trialIndex);
      this.busy = false;
      this.state = answered(this.state, feedback);
      if (this.state.lastFeedback) {
        this.render(); // training: show the outcome before moving on
      } else {
        await this.advance(); // test: advance immediately, no feedback
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale trial (e.g. answered in another tab): re-sync from server
        this.busy = false;
        await this.loadTrial();
        return;
      }
      this.fail(String(err), () => this.answer(prediction));
    }
  }

  async advance(): Promise<void> {
    this.state = feedbackDismissed(this.state);
    await this.loadTrial();
  }

  async showResults(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) {
      return;
    }
    try {
      const results = await this.api.getResults(sid);
      this.state = sessionCompleted(this.state, results);
      this.render();
    } catch (err) {
      this.fail(String(err), () => this.showResults());
    }
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const controller = new Controller(root, new ApiClient(""));
  const existing = sessionStorage.getItem(STORAGE_KEY);
  if (existing) {
    void controller.resume(existing);
  } else {
    controller.render();
  }
}

boot();
