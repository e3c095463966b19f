/** Client-side mirror of the platform's execute-request validation.
 *
 * The form layer refuses to submit anything this module rejects, so every
 * request the UI emits already satisfies the server-side rules (server-only
 * rules like quotas still apply there).
 */

import type { InputDescription, ProcessDescription } from "./types.js";
import { isNumberGrid } from "./types.js";

export interface Violation {
  input: string;
  rule: string;
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

export function checkValue(value: unknown, desc: InputDescription): string | null {
  switch (desc.dataKind) {
    case "number":
      if (!isFiniteNumber(value)) return "wrong kind, expected number";
      break;
    case "integer":
      if (!Number.isInteger(value)) return "wrong kind, expected integer";
      break;
    case "boolean":
      if (typeof value !== "boolean") return "wrong kind, expected boolean";
      return null;
    case "string":
      if (typeof value !== "string") return "wrong kind, expected string";
      return null;
    case "enumeration":
      if (!(desc.allowedValues ?? []).some((allowed) => allowed === value)) {
        return "not in allowed values";
      }
      return null;
    case "numberGrid":
      if (!isNumberGrid(value)) return "wrong kind, expected numberGrid object";
      return null;
    case "geoPointList": {
      if (!Array.isArray(value)) return "wrong kind, expected geoPointList array";
      for (const point of value) {
        if (typeof point !== "object" || point === null) return "geoPointList entries must be objects";
        const p = point as { x?: unknown; y?: unknown; attributes?: unknown };
        if (!isFiniteNumber(p.x) || !isFiniteNumber(p.y)) {
          return "geoPointList entries require numeric x and y";
        }
        if (p.attributes !== undefined && (typeof p.attributes !== "object" || p.attributes === null)) {
          return "geoPointList attributes must be an object";
        }
      }
      return null;
    }
    default:
      return `unknown dataKind '${desc.dataKind}'`;
  }
  if (desc.bounds) {
    const [lo, hi] = desc.bounds;
    if ((value as number) < lo || (value as number) > hi) return "out of bounds";
  }
  return null;
}

function multipleAllowed(desc: InputDescription): boolean {
  return desc.maxOccurs === "unbounded" || desc.maxOccurs > 1;
}

export function validateExecuteRequest(
  inputs: Record<string, unknown>,
  desc: ProcessDescription,
): Violation[] {
  const violations: Violation[] = [];
  for (const [name, input] of Object.entries(desc.inputs)) {
    if (!(name in inputs)) {
      if (input.minOccurs >= 1) violations.push({ input: name, rule: "required, absent" });
      continue;
    }
    const value = inputs[name];
    if (multipleAllowed(input)) {
      if (!Array.isArray(value)) {
        violations.push({ input: name, rule: "wrong kind, expected array of occurrences" });
        continue;
      }
      if (value.length < input.minOccurs) violations.push({ input: name, rule: "too few occurrences" });
      if (input.maxOccurs !== "unbounded" && value.length > input.maxOccurs) {
        violations.push({ input: name, rule: "too many occurrences" });
      }
      for (const occurrence of value) {
        const bad = checkValue(occurrence, input);
        if (bad) {
          violations.push({ input: name, rule: bad });
          break;
        }
      }
    } else {
      const bad = checkValue(value, input);
      if (bad) violations.push({ input: name, rule: bad });
    }
  }
  for (const name of Object.keys(inputs)) {
    if (!(name in desc.inputs)) violations.push({ input: name, rule: "not declared" });
  }
  return violations;
}

export function applyDefaults(
  inputs: Record<string, unknown>,
  desc: ProcessDescription,
): Record<string, unknown> {
  const filled: Record<string, unknown> = { ...inputs };
  for (const [name, input] of Object.entries(desc.inputs)) {
    if (!(name in filled) && input.defaultValue !== undefined) {
      filled[name] = input.defaultValue;
    }
  }
  return filled;
}
