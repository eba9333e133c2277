/** Typed client for the trial service HTTP API. */

export interface SessionInfo {
  session_id: string;
  n_training: number;
  n_test: number;
}

export interface TrialView {
  trial_index: number;
  phase: "training" | "test";
  image_url: string;
  n_training: number;
  n_test: number;
}

export interface TrainingFeedback {
  correct: boolean;
  outcome_image: string;
}

export interface ResultsPayload {
  subject_accuracy: number;
  subject_accuracy_ci: number;
  per_size: Record<string, { n: number; accuracy: number; accuracy_ci: number }>;
  model_accuracy: number;
  model_accuracy_ci: number;
  human_model_correlation: number | null;
  model_roc: { points: [number, number][]; auc: number };
  n_test: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "Content-Type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const text = await resp.text();
    const payload = text ? JSON.parse(text) : {};
    if (!resp.ok) {
      throw new ApiError(resp.status, payload.error ?? `HTTP ${resp.status}`);
    }
    return payload as T;
  }

  createSession(subjectLabel: string, seed?: number): Promise<SessionInfo> {
    const body: Record<string, unknown> = { subject_label: subjectLabel };
    if (seed !== undefined) {
      body.seed = seed;
    }
    return this.request<SessionInfo>("POST", "/api/session", body);
  }

  getTrial(sessionId: string): Promise<TrialView> {
    return this.request<TrialView>("GET", `/api/session/${sessionId}/trial`);
  }

  /** Training replies carry feedback; test replies are empty objects. */
  postResponse(
    sessionId: string,
    prediction: "fall" | "stay",
    trialIndex: number,
  ): Promise<TrainingFeedback | Record<string, never>> {
    return this.request("POST", `/api/session/${sessionId}/response`, {
      prediction,
      trial_index: trialIndex,
    });
  }

  getResults(sessionId: string): Promise<ResultsPayload> {
    return this.request<ResultsPayload>("GET", `/api/session/${sessionId}/results`);
  }
}
