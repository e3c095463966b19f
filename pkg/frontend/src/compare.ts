/** Run comparison: signed per-cell differences of congruent grids plus
 * summary statistics; incongruent pairs produce a notice, never a crash. */

import type { NumberGrid } from "./types.js";
import { isNumberGrid } from "./types.js";
import type { ScenarioRun } from "./runs.js";

export interface DiffStats {
  meanAbsoluteDifference: number;
  maxAbsoluteDifference: number;
  differingCells: number;
}

export type ComparisonResult =
  | {
      kind: "difference";
      a: NumberGrid;
      b: NumberGrid;
      difference: NumberGrid;
      stats: DiffStats;
    }
  | { kind: "incongruent"; notice: string };

export function diffGrids(a: NumberGrid, b: NumberGrid): NumberGrid {
  return {
    width: a.width,
    height: a.height,
    cellSize: a.cellSize,
    origin: a.origin,
    values: a.values.map((v, i) => v - b.values[i]),
  };
}

export function diffStats(difference: NumberGrid): DiffStats {
  const absolutes = difference.values.map(Math.abs);
  const total = absolutes.reduce((acc, v) => acc + v, 0);
  return {
    meanAbsoluteDifference: absolutes.length === 0 ? 0 : total / absolutes.length,
    maxAbsoluteDifference: absolutes.reduce((acc, v) => Math.max(acc, v), 0),
    differingCells: absolutes.filter((v) => v !== 0).length,
  };
}

function firstGridOutput(run: ScenarioRun): NumberGrid | null {
  for (const value of Object.values(run.outputs ?? {})) {
    if (isNumberGrid(value)) return value;
  }
  return null;
}

/** Compare the first numberGrid output of two successful runs (a - b). */
export function compareRuns(a: ScenarioRun, b: ScenarioRun): ComparisonResult {
  if (a.state !== "successful" || b.state !== "successful") {
    return { kind: "incongruent", notice: "both runs must be successful to compare" };
  }
  const gridA = firstGridOutput(a);
  const gridB = firstGridOutput(b);
  if (!gridA || !gridB) {
    return { kind: "incongruent", notice: "both runs need a grid output to compare" };
  }
  if (gridA.width !== gridB.width || gridA.height !== gridB.height) {
    return {
      kind: "incongruent",
      notice: `grids are not congruent (${gridA.width}×${gridA.height} vs ${gridB.width}×${gridB.height})`,
    };
  }
  const difference = diffGrids(gridA, gridB);
  return { kind: "difference", a: gridA, b: gridB, difference, stats: diffStats(difference) };
}
