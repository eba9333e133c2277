/** DOM construction for the three screens. Rendering only; no experiment
 * logic lives here. */

import type { ResultsPayload, TrainingFeedback } from "./api.js";
import { formatCorrelation, formatPercentWithCi } from "./format.js";
import { diagonalPath, rocPath } from "./roc.js";
import type { UiSessionState } from "./state.js";
import { progressLabel } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export interface StartHandlers {
  onBegin(subjectLabel: string, seed: number | undefined): void;
}

export function renderStartScreen(root: HTMLElement, handlers: StartHandlers): void {
  root.replaceChildren();
  const card = el("div", "card");
  card.append(el("h1", undefined, "Will the tower fall?"));
  card.append(el("p", "hint",
    "You will see 50 practice towers with feedback, then 100 test towers " +
    "without feedback. Answer each one: fall or stay. There is no time limit."));
  const label = el("input") as HTMLInputElement;
  label.placeholder = "your initials or alias";
  label.id = "subject-label";
  const seed = el("input") as HTMLInputElement;
  seed.placeholder = "seed (optional)";
  seed.id = "session-seed";
  const begin = el("button", "primary", "Begin");
  begin.addEventListener("click", () => {
    const seedValue = seed.value.trim() === "" ? undefined : Number(seed.value);
    handlers.onBegin(label.value.trim() || "anonymous", seedValue);
  });
  card.append(label, seed, begin);
  root.append(card);
}

export interface TrialHandlers {
  onAnswer(prediction: "fall" | "stay"): void;
  onContinue(): void;
}

export function renderTrialScreen(
  root: HTMLElement,
  state: UiSessionState,
  handlers: TrialHandlers,
  busy: boolean,
): void {
  root.replaceChildren();
  const wrap = el("div", "trial");
  wrap.append(el("div", "progress", progressLabel(state)));

  const panes = el("div", "panes");
  const left = el("div", "pane");
  if (state.imageUrl) {
    const img = el("img") as HTMLImageElement;
    img.src = state.imageUrl;
    img.alt = "block tower";
    img.className = "tower";
    left.append(img);
  }
  panes.append(left);

  if (state.lastFeedback) {
    const right = el("div", "pane feedback");
    const badge = el(
      "div",
      state.lastFeedback.correct ? "badge correct" : "badge incorrect",
      state.lastFeedback.correct ? "Correct" : "Incorrect",
    );
    const outcome = el("img") as HTMLImageElement;
    outcome.src = state.lastFeedback.outcome_image;
    outcome.alt = "outcome";
    outcome.className = "tower";
    right.append(badge, outcome);
    panes.append(right);
  }
  wrap.append(panes);

  const controls = el("div", "controls");
  if (state.lastFeedback) {
    const cont = el("button", "primary", "Next trial");
    cont.addEventListener("click", () => handlers.onContinue());
    controls.append(cont);
  } else {
    for (const choice of ["fall", "stay"] as const) {
      const btn = el("button", "choice", choice === "fall" ? "Fall" : "Stay");
      btn.disabled = busy; // double-click protection
      btn.addEventListener("click", () => handlers.onAnswer(choice));
      controls.append(btn);
    }
  }
  wrap.append(controls);
  root.append(wrap);
}

export function renderRetryBanner(root: HTMLElement, message: string,
                                  onRetry: () => void): void {
  const banner = el("div", "banner error");
  banner.append(el("span", undefined, `Network problem: ${message} `));
  const retry = el("button", undefined, "Retry");
  retry.addEventListener("click", () => {
    banner.remove();
    onRetry();
  });
  banner.append(retry);
  root.prepend(banner);
}

const ROC_BOX = { width: 280, height: 280, margin: 24 };

export function renderResultsScreen(root: HTMLElement, results: ResultsPayload | null): void {
  root.replaceChildren();
  const card = el("div", "card results");
  card.append(el("h1", undefined, "Results"));
  if (!results || typeof results.subject_accuracy !== "number") {
    card.append(el("div", "banner error", "Results unavailable."));
    root.append(card);
    return;
  }
  card.append(el("p", "headline",
    `Your accuracy: ${formatPercentWithCi(results.subject_accuracy, results.subject_accuracy_ci)}`));
  card.append(el("p", undefined,
    `Model accuracy on the same towers: ${formatPercentWithCi(results.model_accuracy, results.model_accuracy_ci)}`));
  card.append(el("p", undefined,
    `Agreement between you and the model (Pearson): ${formatCorrelation(results.human_model_correlation)}`));

  const bars = el("div", "bars");
  bars.append(el("h2", undefined, "Accuracy by tower size"));
  for (const [size, stats] of Object.entries(results.per_size)) {
    const row = el("div", "bar-row");
    row.append(el("span", "bar-label", `${size} blocks`));
    const track = el("div", "bar-track");
    const fill = el("div", "bar-fill");
    fill.style.width = `${Math.round(stats.accuracy * 100)}%`;
    track.append(fill);
    row.append(track);
    row.append(el("span", "bar-value",
      formatPercentWithCi(stats.accuracy, stats.accuracy_ci)));
    bars.append(row);
  }
  card.append(bars);

  const chart = el("div", "roc");
  chart.append(el("h2", undefined, `Model ROC (AUC ${results.model_roc.auc.toFixed(3)})`));
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${ROC_BOX.width} ${ROC_BOX.height}`);
  svg.setAttribute("class", "roc-chart");
  const diag = document.createElementNS("http://www.w3.org/2000/svg", "path");
  diag.setAttribute("d", diagonalPath(ROC_BOX));
  diag.setAttribute("class", "roc-diagonal");
  const curve = document.createElementNS("http://www.w3.org/2000/svg", "path");
  curve.setAttribute("d", rocPath(results.model_roc.points, ROC_BOX));
  curve.setAttribute("class", "roc-curve");
  svg.append(diag, curve);
  chart.append(svg);
  card.append(chart);
  root.append(card);
}
