/** Wire types of the platform's process API (JSON, camelCase fields). */

export type DataKind =
  | "number"
  | "integer"
  | "boolean"
  | "string"
  | "enumeration"
  | "numberGrid"
  | "geoPointList";

export interface NumberGrid {
  width: number;
  height: number;
  cellSize: number;
  origin: [number, number];
  values: number[];
}

export interface GeoPoint {
  x: number;
  y: number;
  attributes?: Record<string, unknown>;
}

export interface InputDescription {
  title: string;
  dataKind: string; // declared open here: unknown kinds render as unsupported
  minOccurs: number;
  maxOccurs: number | "unbounded";
  bounds?: [number, number];
  allowedValues?: unknown[];
  defaultValue?: unknown;
}

export interface OutputDescription {
  title: string;
  dataKind: string;
}

export interface ProcessSummary {
  id: string;
  version: string;
  title: string;
  description: string;
  keywords: string[];
  jobControlOptions: string[];
}

export interface ProcessDescription {
  summary: ProcessSummary;
  inputs: Record<string, InputDescription>;
  outputs: Record<string, OutputDescription>;
}

export type JobState = "accepted" | "running" | "successful" | "failed" | "dismissed";

export interface Job {
  jobId: string;
  processId: string;
  owner: string;
  state: JobState;
  progress: number;
  message: string;
  createdAt: string;
  startedAt?: string;
  finishedAt?: string;
  expiresAt?: string;
  computeSeconds?: number;
}

export interface ProblemDetail {
  type: string;
  title: string;
  status: number;
  detail: string;
  violations?: string[];
}

export function isNumberGrid(value: unknown): value is NumberGrid {
  if (typeof value !== "object" || value === null) return false;
  const grid = value as NumberGrid;
  return (
    Number.isInteger(grid.width) &&
    grid.width > 0 &&
    Number.isInteger(grid.height) &&
    grid.height > 0 &&
    typeof grid.cellSize === "number" &&
    grid.cellSize > 0 &&
    Array.isArray(grid.origin) &&
    grid.origin.length === 2 &&
    Array.isArray(grid.values) &&
    grid.values.length === grid.width * grid.height &&
    grid.values.every((v) => typeof v === "number" && Number.isFinite(v))
  );
}
