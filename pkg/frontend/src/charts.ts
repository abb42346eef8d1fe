/**
 * Pure chart geometry: world-to-pixel scaling, SVG path strings for
 * trajectory polylines, contour shading samples, and bar layouts. All
 * DOM-free so it can be unit-tested; views glue the output into nodes.
 */
import { Expression } from "./expr.js";

export interface Bounds {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

export function boundsOf(points: [number, number][], padRatio = 0.1): Bounds {
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [x, y] of points) {
    minX = Math.min(minX, x);
    maxX = Math.max(maxX, x);
    minY = Math.min(minY, y);
    maxY = Math.max(maxY, y);
  }
  if (!Number.isFinite(minX)) return { minX: -1, maxX: 1, minY: -1, maxY: 1 };
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  return {
    minX: minX - spanX * padRatio,
    maxX: maxX + spanX * padRatio,
    minY: minY - spanY * padRatio,
    maxY: maxY + spanY * padRatio,
  };
}

export interface Projector {
  toPixel(x: number, y: number): [number, number];
}

/** Y axis flips: world up is pixel down. */
export function makeProjector(bounds: Bounds, width: number, height: number): Projector {
  const sx = width / (bounds.maxX - bounds.minX);
  const sy = height / (bounds.maxY - bounds.minY);
  return {
    toPixel(x: number, y: number): [number, number] {
      return [(x - bounds.minX) * sx, height - (y - bounds.minY) * sy];
    },
  };
}

export function polylinePath(points: [number, number][], projector: Projector): string {
  if (points.length === 0) return "";
  const parts = points.map(([x, y], i) => {
    const [px, py] = projector.toPixel(x, y);
    return `${i === 0 ? "M" : "L"}${px.toFixed(1)},${py.toFixed(1)}`;
  });
  return parts.join(" ");
}

/** Distinguishable stroke per student, stable across repaints. */
export function colorFor(key: string): string {
  let hash = 2166136261;
  for (const ch of key) {
    hash = (hash ^ ch.charCodeAt(0)) >>> 0;
    hash = (hash * 16777619) >>> 0;
  }
  return `hsl(${hash % 360}, 70%, 45%)`;
}

export interface ContourCell {
  px: number;
  py: number;
  /** 0 (low objective) .. 1 (high), log-compressed. */
  level: number;
}

/**
 * Sample the objective on a grid in world space; levels are normalized
 * log-scale so a quartic bowl still shows structure near its minimum.
 */
export function contourGrid(
  expression: Expression,
  variables: [string, string],
  bounds: Bounds,
  cells = 40,
): ContourCell[] {
  const values: number[][] = [];
  let low = Infinity;
  let high = -Infinity;
  for (let i = 0; i < cells; i++) {
    const row: number[] = [];
    for (let j = 0; j < cells; j++) {
      const x = bounds.minX + ((i + 0.5) / cells) * (bounds.maxX - bounds.minX);
      const y = bounds.minY + ((j + 0.5) / cells) * (bounds.maxY - bounds.minY);
      let v = NaN;
      try {
        v = expression.evaluate({ [variables[0]]: x, [variables[1]]: y });
      } catch {
        // leave the cell unshaded
      }
      if (Number.isFinite(v)) {
        low = Math.min(low, v);
        high = Math.max(high, v);
      }
      row.push(v);
    }
    values.push(row);
  }
  const cellsOut: ContourCell[] = [];
  if (!Number.isFinite(low) || high === low) return cellsOut;
  const logFloor = Math.log1p(0);
  const logSpan = Math.log1p(high - low) - logFloor || 1;
  for (let i = 0; i < cells; i++) {
    for (let j = 0; j < cells; j++) {
      const v = values[i][j];
      if (!Number.isFinite(v)) continue;
      cellsOut.push({
        px: i / cells,
        py: 1 - (j + 1) / cells,
        level: (Math.log1p(v - low) - logFloor) / logSpan,
      });
    }
  }
  return cellsOut;
}

export interface Bar {
  label: string;
  value: number;
  /** 0..1 relative to the tallest bar. */
  ratio: number;
  title: string;
}

export function barLayout(counts: Record<string, number>): Bar[] {
  const entries = Object.entries(counts).sort(
    (a, b) => b[1] - a[1] || a[0].localeCompare(b[0]),
  );
  const max = entries.length ? entries[0][1] : 1;
  return entries.map(([label, value]) => ({
    label,
    value,
    ratio: max ? value / max : 0,
    title: `${label}: ${value}`,
  }));
}
