/** Display formatting for accuracies and correlations. */

export function formatPercentWithCi(accuracy: number, ci: number): string {
  const pct = Math.round(accuracy * 100);
  const ciPct = (ci * 100).toFixed(1);
  return `${pct}% ± ${ciPct}%`;
}

export function formatCorrelation(rho: number | null): string {
  if (rho === null || Number.isNaN(rho)) {
    return "n/a";
  }
  return rho.toFixed(2);
}
