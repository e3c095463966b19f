/** Scenario runs: submission, status polling with backoff, and
 * reconstruction of the run list from the platform's job history. */

import type { PlatformClient } from "./api.js";
import { PlatformError } from "./api.js";
import type { FormModel } from "./form.js";
import { applyViolations, buildExecuteInputs } from "./form.js";
import type { Job, JobState, ProcessDescription } from "./types.js";

export type RunState = "pending" | JobState;

export interface ScenarioRun {
  runId: string;
  processId: string;
  /** immutable snapshot of the submitted inputs */
  inputs: Readonly<Record<string, unknown>>;
  label: string;
  mode: "sync" | "async";
  jobId?: string;
  state: RunState;
  progress: number;
  outputs?: Record<string, unknown>;
  errorMessage?: string;
  quotaExceeded?: boolean;
}

export interface SubmitOutcome {
  run: ScenarioRun;
  /** form annotated with server-side violations, when a 422 came back */
  form: FormModel;
}

let runCounter = 0;

export function nextRunId(): string {
  runCounter += 1;
  return `run-${Date.now()}-${runCounter}`;
}

export async function submitScenario(
  client: PlatformClient,
  form: FormModel,
  desc: ProcessDescription,
  preferAsync: boolean,
  label = "",
): Promise<SubmitOutcome> {
  const inputs = Object.freeze(buildExecuteInputs(form, desc));
  const base: ScenarioRun = {
    runId: nextRunId(),
    processId: form.processId,
    inputs,
    label: label || `${form.processId} ${new Date().toISOString()}`,
    mode: preferAsync ? "async" : "sync",
    state: "pending",
    progress: 0,
  };
  try {
    const result = await client.execute(form.processId, { ...inputs }, preferAsync);
    if (result.kind === "outputs") {
      return {
        run: { ...base, state: "successful", progress: 100, outputs: result.outputs },
        form,
      };
    }
    return {
      run: { ...base, state: result.job.state, jobId: result.job.jobId, progress: result.job.progress },
      form,
    };
  } catch (error) {
    if (error instanceof PlatformError) {
      const annotated =
        error.status === 422 && error.problem?.violations
          ? applyViolations(form, error.problem.violations)
          : form;
      return {
        run: {
          ...base,
          state: "failed",
          errorMessage: error.problem?.detail ?? error.message,
          quotaExceeded: error.problem?.type === "quota-exceeded",
        },
        form: annotated,
      };
    }
    return {
      run: { ...base, state: "failed", errorMessage: String(error) },
      form,
    };
  }
}

export interface PollOptions {
  initialDelayMs?: number;
  maxDelayMs?: number;
  backoffFactor?: number;
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Poll an async run until terminal, growing the interval geometrically. */
export async function pollRun(
  client: PlatformClient,
  run: ScenarioRun,
  onUpdate: (run: ScenarioRun) => void,
  options: PollOptions = {},
): Promise<ScenarioRun> {
  if (!run.jobId) return run;
  const {
    initialDelayMs = 250,
    maxDelayMs = 5000,
    backoffFactor = 1.5,
    timeoutMs = 10 * 60 * 1000,
    sleep = defaultSleep,
  } = options;
  let delay = initialDelayMs;
  const deadline = Date.now() + timeoutMs;
  let current = run;
  for (;;) {
    let job: Job;
    try {
      job = await client.job(run.jobId);
    } catch (error) {
      current = { ...current, state: "failed", errorMessage: String(error) };
      onUpdate(current);
      return current;
    }
    current = { ...current, state: job.state, progress: job.progress };
    onUpdate(current);
    if (job.state === "successful") {
      try {
        const outputs = await client.results(run.jobId);
        current = { ...current, outputs };
      } catch (error) {
        current = { ...current, state: "failed", errorMessage: String(error) };
      }
      onUpdate(current);
      return current;
    }
    if (job.state === "failed" || job.state === "dismissed") {
      current = { ...current, errorMessage: job.message };
      onUpdate(current);
      return current;
    }
    if (Date.now() > deadline) {
      current = { ...current, state: "failed", errorMessage: "polling timed out" };
      onUpdate(current);
      return current;
    }
    await sleep(delay);
    delay = Math.min(maxDelayMs, delay * backoffFactor);
  }
}

/** Rebuild the run list from the platform's owner-scoped job history, so a
 * page reload does not lose scenario state. */
export async function reconstructRuns(client: PlatformClient): Promise<ScenarioRun[]> {
  const page = await client.jobs(200, 0);
  return page.jobs.map((job) => ({
    runId: `job-${job.jobId}`,
    processId: job.processId,
    inputs: Object.freeze({}),
    label: `${job.processId} ${job.createdAt}`,
    mode: "async" as const,
    jobId: job.jobId,
    state: job.state,
    progress: job.progress,
    errorMessage: job.state === "failed" ? job.message : undefined,
  }));
}
