/** DOM shell wiring the tested modules to the page. Talks exclusively to
 * the platform's public HTTP API. */

import { loadSettings, PlatformClient } from "./api.js";
import { compareRuns } from "./compare.js";
import {
  buildForm,
  clearControlValue,
  formIsSubmittable,
  setControlValue,
  type FormControl,
  type FormModel,
} from "./form.js";
import { cellAt, isTable, rasterize, rasterizeDiff, type Raster } from "./raster.js";
import { pollRun, reconstructRuns, submitScenario, type ScenarioRun } from "./runs.js";
import { Store } from "./state.js";
import type { NumberGrid, ProcessDescription } from "./types.js";
import { isNumberGrid } from "./types.js";

const store = new Store();
let client: PlatformClient | null = null;
let currentForm: FormModel | null = null;
let currentDescription: ProcessDescription | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  node.append(...children);
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

// ---------------------------------------------------------------------------
// connection

async function connect(): Promise<void> {
  const url = (byId("platform-url") as HTMLInputElement).value.trim();
  const token = (byId("token") as HTMLInputElement).value.trim();
  client = new PlatformClient(url, token || null);
  try {
    const landing = await client.landing();
    byId("connection-state").textContent = `connected to ${landing.title}`;
    await refreshProcesses();
    const runs = await reconstructRuns(client);
    store.update((state) => ({ ...state, runs }));
  } catch (error) {
    byId("connection-state").textContent = `connection failed: ${String(error)}`;
    client = null;
  }
}

async function refreshProcesses(): Promise<void> {
  if (!client) return;
  const summaries = await client.allProcesses();
  const list = byId("process-list");
  list.replaceChildren();
  for (const summary of summaries) {
    const button = el("button", { class: "process" }, `${summary.id} — ${summary.title}`);
    button.addEventListener("click", () => void selectProcess(summary.id));
    list.append(el("li", {}, button));
  }
}

async function selectProcess(processId: string): Promise<void> {
  if (!client) return;
  currentDescription = await client.describe(processId);
  currentForm = buildForm(currentDescription);
  store.update((state) => ({ ...state, selectedProcessId: processId }));
  renderForm();
}

// ---------------------------------------------------------------------------
// form rendering

function parseNumber(raw: string): number | undefined {
  if (raw.trim() === "") return undefined;
  const value = Number(raw);
  return Number.isNaN(value) ? undefined : value;
}

function controlRow(control: FormControl): HTMLElement {
  const row = el("div", { class: "control" });
  const label = el("label", {}, `${control.inputName} — ${control.description.title}`);
  row.append(label);
  const update = (value: unknown) => {
    if (!currentForm) return;
    currentForm = value === undefined
      ? clearControlValue(currentForm, control.inputName)
      : setControlValue(currentForm, control.inputName, value);
    renderForm();
  };

  switch (control.controlKind) {
    case "numberField":
    case "integerField": {
      const input = el("input", { type: "number" }) as HTMLInputElement;
      if (control.description.bounds) {
        input.min = String(control.description.bounds[0]);
        input.max = String(control.description.bounds[1]);
      }
      if (control.controlKind === "integerField") input.step = "1";
      if (control.currentValue !== undefined) input.value = String(control.currentValue);
      input.addEventListener("change", () => {
        const parsed = parseNumber(input.value);
        update(control.controlKind === "integerField" && parsed !== undefined
          ? Math.trunc(parsed) : parsed);
      });
      row.append(input);
      break;
    }
    case "toggle": {
      const input = el("input", { type: "checkbox" }) as HTMLInputElement;
      input.checked = control.currentValue === true;
      input.addEventListener("change", () => update(input.checked));
      row.append(input);
      break;
    }
    case "textField": {
      const input = el("input", { type: "text" }) as HTMLInputElement;
      if (typeof control.currentValue === "string") input.value = control.currentValue;
      input.addEventListener("change", () => update(input.value));
      row.append(input);
      break;
    }
    case "select": {
      const select = el("select") as HTMLSelectElement;
      select.append(el("option", { value: "" }, "(choose)"));
      for (const allowed of control.description.allowedValues ?? []) {
        select.append(el("option", { value: String(allowed) }, String(allowed)));
      }
      if (control.currentValue !== undefined) select.value = String(control.currentValue);
      select.addEventListener("change", () => update(select.value === "" ? undefined : select.value));
      row.append(select);
      break;
    }
    case "gridEditor":
      row.append(gridEditor(control, update));
      break;
    case "pointEditor":
      row.append(pointEditor(control, update));
      break;
    default:
      row.append(el("em", { class: "unsupported" },
        `unsupported input kind '${control.description.dataKind}'`));
  }

  if (!control.validationState.ok && control.validationState.message) {
    row.append(el("span", { class: "violation" }, control.validationState.message));
  }
  return row;
}

function gridEditor(control: FormControl, update: (value: unknown) => void): HTMLElement {
  const wrap = el("div", { class: "grid-editor" });
  const size = el("input", { type: "text", placeholder: "width x height x value, e.g. 3x3x20" }) as HTMLInputElement;
  const make = el("button", { type: "button" }, "make uniform grid");
  make.addEventListener("click", () => {
    const match = size.value.trim().match(/^(\d+)\s*x\s*(\d+)\s*x\s*(-?[\d.]+)$/i);
    if (!match) return;
    const [w, h, v] = [Number(match[1]), Number(match[2]), Number(match[3])];
    update({ width: w, height: h, cellSize: 1.0, origin: [0, 0], values: Array(w * h).fill(v) });
  });
  const upload = el("input", { type: "file", accept: "application/json" }) as HTMLInputElement;
  upload.addEventListener("change", async () => {
    const file = upload.files?.[0];
    if (!file) return;
    try {
      update(JSON.parse(await file.text()));
    } catch {
      update("invalid upload");
    }
  });
  wrap.append(size, make, upload);
  if (isNumberGrid(control.currentValue)) {
    wrap.append(el("span", { class: "grid-note" },
      `grid ${control.currentValue.width}×${control.currentValue.height}`));
  }
  return wrap;
}

function pointEditor(control: FormControl, update: (value: unknown) => void): HTMLElement {
  const wrap = el("div", { class: "point-editor" });
  const canvas = el("canvas", { width: "200", height: "200", class: "point-canvas" }) as HTMLCanvasElement;
  const level = el("input", { type: "number", value: "70" }) as HTMLInputElement;
  const points: { x: number; y: number; attributes: { level: number } }[] = Array.isArray(
    control.currentValue,
  )
    ? [...(control.currentValue as { x: number; y: number; attributes: { level: number } }[])]
    : [];
  const redraw = () => {
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#20324c";
    for (const point of points) ctx.fillRect(point.x * 10 - 2, 200 - point.y * 10 - 2, 4, 4);
  };
  canvas.addEventListener("click", (event) => {
    const rect = canvas.getBoundingClientRect();
    const x = (event.clientX - rect.left) / 10;
    const y = (200 - (event.clientY - rect.top)) / 10;
    points.push({ x, y, attributes: { level: Number(level.value) || 70 } });
    update([...points]);
    redraw();
  });
  const clear = el("button", { type: "button" }, "clear points");
  clear.addEventListener("click", () => {
    points.length = 0;
    update([]);
    redraw();
  });
  wrap.append(canvas, el("span", {}, "level dB:"), level, clear,
    el("span", { class: "grid-note" }, `${points.length} points`));
  queueMicrotask(redraw);
  return wrap;
}

function renderForm(): void {
  const host = byId("form");
  host.replaceChildren();
  if (!currentForm || !currentDescription) return;
  host.append(el("h3", {}, currentForm.processId));
  for (const control of currentForm.controls) host.append(controlRow(control));
  const submittable = formIsSubmittable(currentForm);
  const syncButton = el("button", {}, "run now") as HTMLButtonElement;
  const asyncButton = el("button", {}, "queue run") as HTMLButtonElement;
  syncButton.disabled = !submittable;
  asyncButton.disabled = !submittable;
  syncButton.addEventListener("click", () => void runScenario(false));
  asyncButton.addEventListener("click", () => void runScenario(true));
  host.append(el("div", { class: "actions" }, syncButton, asyncButton));
}

// ---------------------------------------------------------------------------
// runs

async function runScenario(preferAsync: boolean): Promise<void> {
  if (!client || !currentForm || !currentDescription) return;
  const { run, form } = await submitScenario(client, currentForm, currentDescription, preferAsync);
  currentForm = form;
  renderForm();
  store.upsertRun(run);
  if (run.quotaExceeded) store.setBanner("quota exceeded: " + (run.errorMessage ?? ""));
  if (run.state === "accepted" || run.state === "running") {
    void pollRun(client, run, (updated) => store.upsertRun(updated));
  }
}

function renderRuns(runs: ScenarioRun[]): void {
  const host = byId("runs");
  host.replaceChildren();
  for (const run of runs) {
    const row = el("li", { class: `run run-${run.state}` });
    const chip = el("span", { class: "chip" }, `${run.state} ${run.progress}%`);
    const show = el("button", {}, "show");
    show.addEventListener("click", () => renderResult(run));
    const compareButton = el("button", {}, "compare");
    compareButton.addEventListener("click", () => pickForComparison(run.runId));
    row.append(el("span", { class: "run-label" }, run.label), chip, show, compareButton);
    if (run.errorMessage) row.append(el("span", { class: "violation" }, run.errorMessage));
    host.append(row);
  }
}

// ---------------------------------------------------------------------------
// result + comparison rendering

function blit(canvas: HTMLCanvasElement, raster: Raster, cellPx: number): void {
  canvas.width = raster.width * cellPx;
  canvas.height = raster.height * cellPx;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = new ImageData(new Uint8ClampedArray(raster.pixels), raster.width, raster.height);
  const offscreen = document.createElement("canvas");
  offscreen.width = raster.width;
  offscreen.height = raster.height;
  offscreen.getContext("2d")?.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(offscreen, 0, 0, canvas.width, canvas.height);
}

function legendStrip(raster: Raster): HTMLElement {
  const strip = el("div", { class: "legend" });
  const steps = 32;
  for (let i = 0; i <= steps; i++) {
    const value = raster.legend.min + ((raster.legend.max - raster.legend.min) * i) / steps;
    const cell = el("span", { class: "legend-cell" });
    cell.style.background = raster.legend.colorAt(value);
    strip.append(cell);
  }
  return el("div", {},
    el("span", {}, raster.legend.min.toPrecision(4)), strip,
    el("span", {}, raster.legend.max.toPrecision(4)));
}

function gridView(grid: NumberGrid, diff = false): HTMLElement {
  const raster = diff ? rasterizeDiff(grid) : rasterize(grid);
  const cellPx = Math.max(4, Math.min(40, Math.floor(320 / Math.max(grid.width, grid.height))));
  const canvas = el("canvas", { class: "raster" }) as HTMLCanvasElement;
  blit(canvas, raster, cellPx);
  const readout = el("span", { class: "readout" }, "hover for values");
  canvas.addEventListener("mousemove", (event) => {
    const rect = canvas.getBoundingClientRect();
    const hit = cellAt(grid, event.clientX - rect.left, event.clientY - rect.top, cellPx);
    readout.textContent = hit
      ? `row ${hit.row}, col ${hit.col}: ${hit.value}`
      : "hover for values";
  });
  return el("div", { class: "grid-view" }, canvas, legendStrip(raster), readout);
}

function renderResult(run: ScenarioRun): void {
  const host = byId("result");
  host.replaceChildren(el("h3", {}, run.label));
  if (run.state !== "successful" || !run.outputs) {
    host.append(el("p", {}, `run is ${run.state}: ${run.errorMessage ?? ""}`));
    return;
  }
  for (const [name, value] of Object.entries(run.outputs)) {
    host.append(el("h4", {}, name));
    if (isNumberGrid(value)) {
      host.append(gridView(value));
    } else if (isTable(value)) {
      const table = el("table", { class: "result-table" });
      table.append(el("tr", {}, ...value.columns.map((c) => el("th", {}, String(c)))));
      for (const rowValues of value.rows) {
        table.append(el("tr", {}, ...rowValues.map((v) => el("td", {}, String(v)))));
      }
      host.append(table);
    } else {
      host.append(el("p", { class: "scalar" }, `${name} = ${JSON.stringify(value)}`));
    }
  }
}

let comparisonPick: string | null = null;

function pickForComparison(runId: string): void {
  if (comparisonPick === null) {
    comparisonPick = runId;
    store.setBanner("pick a second run to compare");
    return;
  }
  const state = store.get();
  const a = state.runs.find((run) => run.runId === comparisonPick);
  const b = state.runs.find((run) => run.runId === runId);
  comparisonPick = null;
  store.setBanner(null);
  if (!a || !b) return;
  const host = byId("result");
  host.replaceChildren(el("h3", {}, `compare: ${a.label} vs ${b.label}`));
  const result = compareRuns(a, b);
  if (result.kind === "incongruent") {
    host.append(el("p", { class: "violation" }, result.notice));
    return;
  }
  const sideBySide = el("div", { class: "side-by-side" },
    gridView(result.a), gridView(result.b));
  host.append(sideBySide);
  host.append(el("h4", {}, "signed difference (a − b)"));
  host.append(gridView(result.difference, true));
  host.append(el("p", {},
    `mean |Δ| = ${result.stats.meanAbsoluteDifference.toPrecision(4)}, ` +
    `max |Δ| = ${result.stats.maxAbsoluteDifference.toPrecision(4)}, ` +
    `${result.stats.differingCells} differing cells`));
}

// ---------------------------------------------------------------------------
// boot

function boot(): void {
  store.subscribe((state) => {
    renderRuns(state.runs);
    byId("banner").textContent = state.banner ?? "";
  });
  byId("connect").addEventListener("click", () => void connect());
  void loadSettings().then(
    (settings) => {
      (byId("platform-url") as HTMLInputElement).value = settings.platformUrl;
    },
    () => undefined, // settings file is optional; the field stays editable
  );
}

if (typeof document !== "undefined") document.addEventListener("DOMContentLoaded", boot);
