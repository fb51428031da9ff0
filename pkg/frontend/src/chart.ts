/** SVG allocation trajectory: one point per issued pi_A, a 0.5 reference
 * line, and a stop marker when the trial reached a terminal state. */

export interface ChartOptions {
  width?: number;
  height?: number;
  padding?: number;
}

export interface ChartGeometry {
  points: { x: number; y: number; pi: number }[];
  referenceY: number;
  stopMarker: { x: number; y: number } | null;
}

const DEFAULTS = { width: 420, height: 180, padding: 24 };

export function trajectoryGeometry(
  piHistory: number[],
  terminal: boolean,
  options: ChartOptions = {},
): ChartGeometry {
  const { width, height, padding } = { ...DEFAULTS, ...options };
  const innerW = width - 2 * padding;
  const innerH = height - 2 * padding;
  const xAt = (i: number) =>
    padding + (piHistory.length > 1 ? (i / (piHistory.length - 1)) * innerW : innerW / 2);
  const yAt = (pi: number) => padding + (1 - pi) * innerH;
  const points = piHistory.map((pi, i) => ({ x: xAt(i), y: yAt(pi), pi }));
  const last = points.at(-1);
  return {
    points,
    referenceY: yAt(0.5),
    stopMarker: terminal && last ? { x: last.x, y: last.y } : null,
  };
}

export function trajectorySvg(
  piHistory: number[],
  terminal: boolean,
  options: ChartOptions = {},
): string {
  const { width, height, padding } = { ...DEFAULTS, ...options };
  const geometry = trajectoryGeometry(piHistory, terminal, options);
  const parts: string[] = [
    `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="allocation trajectory">`,
    `<line class="ref" x1="${padding}" x2="${width - padding}" ` +
      `y1="${geometry.referenceY}" y2="${geometry.referenceY}" stroke-dasharray="4 3"/>`,
  ];
  if (geometry.points.length > 1) {
    const path = geometry.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(1)},${p.y.toFixed(1)}`)
      .join(" ");
    parts.push(`<path class="pi" d="${path}" fill="none"/>`);
  }
  for (const p of geometry.points) {
    parts.push(
      `<circle class="pi-point" cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3">` +
        `<title>pi_A = ${p.pi}</title></circle>`,
    );
  }
  if (geometry.stopMarker) {
    parts.push(
      `<rect class="stop-marker" x="${(geometry.stopMarker.x - 5).toFixed(1)}" ` +
        `y="${(geometry.stopMarker.y - 5).toFixed(1)}" width="10" height="10"/>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
