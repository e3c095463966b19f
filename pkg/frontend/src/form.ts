/** Dynamic form construction from a fetched process description.
 *
 * One control per declared input; the control kind is derived from the
 * input's dataKind, with a total mapping over the seven known kinds and an
 * "unsupported" placeholder for anything newer than this client.
 */

import type { InputDescription, ProcessDescription } from "./types.js";
import { checkValue, validateExecuteRequest, type Violation } from "./validate.js";

export type ControlKind =
  | "numberField"
  | "integerField"
  | "toggle"
  | "textField"
  | "select"
  | "gridEditor"
  | "pointEditor"
  | "unsupported";

const CONTROL_KINDS: Record<string, ControlKind> = {
  number: "numberField",
  integer: "integerField",
  boolean: "toggle",
  string: "textField",
  enumeration: "select",
  numberGrid: "gridEditor",
  geoPointList: "pointEditor",
};

export interface ValidationState {
  ok: boolean;
  message?: string;
}

export interface FormControl {
  inputName: string;
  controlKind: ControlKind;
  description: InputDescription;
  /** undefined means "not provided"; optional inputs may stay that way */
  currentValue: unknown;
  validationState: ValidationState;
}

export interface FormModel {
  processId: string;
  controls: FormControl[];
}

export function controlKindFor(dataKind: string): ControlKind {
  return CONTROL_KINDS[dataKind] ?? "unsupported";
}

function validateControl(value: unknown, desc: InputDescription, kind: ControlKind): ValidationState {
  if (value === undefined) {
    if (desc.minOccurs >= 1) return { ok: false, message: "required" };
    return { ok: true };
  }
  if (kind === "unsupported") {
    return { ok: false, message: `unsupported input kind '${desc.dataKind}'` };
  }
  const bad = checkValue(value, desc);
  return bad ? { ok: false, message: bad } : { ok: true };
}

export function buildForm(desc: ProcessDescription): FormModel {
  const controls: FormControl[] = Object.entries(desc.inputs).map(([name, input]) => {
    const kind = controlKindFor(input.dataKind);
    const prefilled = input.defaultValue !== undefined ? input.defaultValue : undefined;
    return {
      inputName: name,
      controlKind: kind,
      description: input,
      currentValue: prefilled,
      validationState: validateControl(prefilled, input, kind),
    };
  });
  return { processId: desc.summary.id, controls };
}

export function setControlValue(form: FormModel, inputName: string, value: unknown): FormModel {
  const controls = form.controls.map((control) => {
    if (control.inputName !== inputName) return control;
    return {
      ...control,
      currentValue: value,
      validationState: validateControl(value, control.description, control.controlKind),
    };
  });
  return { ...form, controls };
}

export function clearControlValue(form: FormModel, inputName: string): FormModel {
  return setControlValue(form, inputName, undefined);
}

/** The form may be submitted only when every control is valid; an
 * unsupported control blocks submission unless it is optional and empty. */
export function formIsSubmittable(form: FormModel): boolean {
  return form.controls.every((control) => control.validationState.ok);
}

export function formInputs(form: FormModel): Record<string, unknown> {
  const inputs: Record<string, unknown> = {};
  for (const control of form.controls) {
    if (control.currentValue !== undefined && control.controlKind !== "unsupported") {
      inputs[control.inputName] = control.currentValue;
    }
  }
  return inputs;
}

/** Inputs for submission; throws when the form would not validate, so the
 * client can never emit a request the platform would reject as 422. */
export function buildExecuteInputs(form: FormModel, desc: ProcessDescription): Record<string, unknown> {
  if (!formIsSubmittable(form)) {
    throw new Error("form has invalid controls");
  }
  const inputs = formInputs(form);
  const violations = validateExecuteRequest(inputs, desc);
  if (violations.length > 0) {
    throw new Error(
      "form produced an invalid request: " +
        violations.map((v) => `${v.input}: ${v.rule}`).join("; "),
    );
  }
  return inputs;
}

/** Map server-side 422 violations back onto the offending controls. */
export function applyViolations(form: FormModel, violations: string[]): FormModel {
  const byInput = new Map<string, string>();
  for (const violation of violations) {
    const colon = violation.indexOf(":");
    if (colon > 0) {
      byInput.set(violation.slice(0, colon), violation.slice(colon + 1).trim());
    }
  }
  const controls = form.controls.map((control) => {
    const message = byInput.get(control.inputName);
    if (message === undefined) return control;
    return { ...control, validationState: { ok: false, message } };
  });
  return { ...form, controls };
}
