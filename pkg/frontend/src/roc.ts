/** ROC chart geometry: scale (fpr, tpr) points into an SVG path. */

export interface ChartBox {
  width: number;
  height: number;
  margin: number;
}

export function toChartCoords(
  points: [number, number][],
  box: ChartBox,
): [number, number][] {
  const span = { x: box.width - 2 * box.margin, y: box.height - 2 * box.margin };
  return points.map(([fpr, tpr]) => [
    box.margin + fpr * span.x,
    box.height - box.margin - tpr * span.y,
  ]);
}

export function rocPath(points: [number, number][], box: ChartBox): string {
  if (points.length === 0) {
    return "";
  }
  const coords = toChartCoords(points, box);
  const parts = coords.map(([x, y], i) => `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`);
  return parts.join(" ");
}

/** The no-skill diagonal from (0,0) to (1,1) in chart space. */
export function diagonalPath(box: ChartBox): string {
  return rocPath([[0, 0], [1, 1]], box);
}
