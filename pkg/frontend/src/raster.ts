/** Grid-to-raster rendering: color mapping, legends and hover readout.
 * Pure functions producing pixel buffers; the DOM layer just blits them. */

import type { NumberGrid } from "./types.js";

export type Rgb = [number, number, number];

/** Compact blue -> cyan -> yellow -> red ramp. */
const HEAT_STOPS: Rgb[] = [
  [33, 47, 122],
  [38, 164, 196],
  [246, 214, 68],
  [194, 40, 28],
];

function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

export function sampleRamp(stops: Rgb[], t: number): Rgb {
  const clamped = Math.min(1, Math.max(0, t));
  const scaled = clamped * (stops.length - 1);
  const index = Math.min(stops.length - 2, Math.floor(scaled));
  const frac = scaled - index;
  const [r1, g1, b1] = stops[index];
  const [r2, g2, b2] = stops[index + 1];
  return [Math.round(lerp(r1, r2, frac)), Math.round(lerp(g1, g2, frac)), Math.round(lerp(b1, b2, frac))];
}

export function heatColor(t: number): Rgb {
  return sampleRamp(HEAT_STOPS, t);
}

/** Symmetric diverging ramp for signed differences: blue - white - red. */
export function divergingColor(t: number): Rgb {
  const clamped = Math.min(1, Math.max(-1, t));
  if (clamped < 0) {
    return sampleRamp([[255, 255, 255], [33, 102, 172]], -clamped);
  }
  return sampleRamp([[255, 255, 255], [178, 24, 43]], clamped);
}

export interface Legend {
  min: number;
  max: number;
  /** value -> css color, for drawing the legend strip */
  colorAt: (value: number) => string;
}

export interface Raster {
  width: number;
  height: number;
  /** RGBA, row-major from the top row; ready for ImageData */
  pixels: Uint8ClampedArray;
  legend: Legend;
}

function cssColor([r, g, b]: Rgb): string {
  return `rgb(${r}, ${g}, ${b})`;
}

/** Color-mapped raster with the legend range taken from the data; a uniform
 * grid maps to the mid-ramp single color. */
export function rasterize(grid: NumberGrid, colorFor: (t: number) => Rgb = heatColor): Raster {
  const { width, height, values } = grid;
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  const span = max - min;
  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < values.length; i++) {
    const t = span === 0 ? 0.5 : (values[i] - min) / span;
    const [r, g, b] = colorFor(t);
    const offset = i * 4;
    pixels[offset] = r;
    pixels[offset + 1] = g;
    pixels[offset + 2] = b;
    pixels[offset + 3] = 255;
  }
  return {
    width,
    height,
    pixels,
    legend: {
      min,
      max,
      colorAt: (value: number) => cssColor(colorFor(span === 0 ? 0.5 : (value - min) / span)),
    },
  };
}

/** Signed-difference raster with a symmetric diverging scale around zero. */
export function rasterizeDiff(diff: NumberGrid): Raster {
  const absMax = diff.values.reduce((acc, v) => Math.max(acc, Math.abs(v)), 0);
  const pixels = new Uint8ClampedArray(diff.width * diff.height * 4);
  for (let i = 0; i < diff.values.length; i++) {
    const t = absMax === 0 ? 0 : diff.values[i] / absMax;
    const [r, g, b] = divergingColor(t);
    const offset = i * 4;
    pixels[offset] = r;
    pixels[offset + 1] = g;
    pixels[offset + 2] = b;
    pixels[offset + 3] = 255;
  }
  return {
    width: diff.width,
    height: diff.height,
    pixels,
    legend: {
      min: -absMax,
      max: absMax,
      colorAt: (value: number) => cssColor(divergingColor(absMax === 0 ? 0 : value / absMax)),
    },
  };
}

export interface CellReadout {
  row: number;
  col: number;
  value: number;
}

/** Exact value under the pointer, given the on-screen cell size in px. */
export function cellAt(grid: NumberGrid, pxX: number, pxY: number, cellPx: number): CellReadout | null {
  const col = Math.floor(pxX / cellPx);
  const row = Math.floor(pxY / cellPx);
  if (col < 0 || col >= grid.width || row < 0 || row >= grid.height) return null;
  return { row, col, value: grid.values[row * grid.width + col] };
}

export interface TableValue {
  columns: string[];
  rows: unknown[][];
}

export function isTable(value: unknown): value is TableValue {
  if (typeof value !== "object" || value === null) return false;
  const table = value as TableValue;
  return Array.isArray(table.columns) && Array.isArray(table.rows);
}
