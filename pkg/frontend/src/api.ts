/** Thin fetch wrapper over the platform's public HTTP API. */

import type { Job, ProblemDetail, ProcessDescription, ProcessSummary } from "./types.js";

export class PlatformError extends Error {
  constructor(
    readonly status: number,
    readonly problem: ProblemDetail | null,
  ) {
    super(problem?.detail ?? `request failed with status ${status}`);
  }
}

export interface ProcessPage {
  processes: ProcessSummary[];
  total: number;
}

export interface JobPage {
  jobs: Job[];
  total: number;
}

export class PlatformClient {
  constructor(
    readonly baseUrl: string,
    private token: string | null = null,
    private fetchImpl: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    headers.set("Accept", "application/json");
    if (this.token) headers.set("Authorization", `Bearer ${this.token}`);
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      let problem: ProblemDetail | null = null;
      try {
        problem = (await response.json()) as ProblemDetail;
      } catch {
        problem = null;
      }
      throw new PlatformError(response.status, problem);
    }
    return response;
  }

  async landing(): Promise<{ title: string; links: { rel: string; href: string }[] }> {
    return (await this.request("/")).json();
  }

  async processes(limit = 200, offset = 0): Promise<ProcessPage> {
    return (await this.request(`/processes?limit=${limit}&offset=${offset}`)).json();
  }

  async allProcesses(): Promise<ProcessSummary[]> {
    const all: ProcessSummary[] = [];
    let offset = 0;
    for (;;) {
      const page = await this.processes(200, offset);
      all.push(...page.processes);
      offset += 200;
      if (offset >= page.total) return all;
    }
  }

  async describe(processId: string): Promise<ProcessDescription> {
    return (await this.request(`/processes/${processId}`)).json();
  }

  async execute(
    processId: string,
    inputs: Record<string, unknown>,
    preferAsync: boolean,
  ): Promise<{ kind: "outputs"; outputs: Record<string, unknown> } | { kind: "job"; job: Job }> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (preferAsync) headers["Prefer"] = "respond-async";
    const response = await this.request(`/processes/${processId}/execution`, {
      method: "POST",
      headers,
      body: JSON.stringify({ inputs }),
    });
    const body = await response.json();
    if (response.status === 201) return { kind: "job", job: body as Job };
    return { kind: "outputs", outputs: body as Record<string, unknown> };
  }

  async job(jobId: string): Promise<Job> {
    return (await this.request(`/jobs/${jobId}`)).json();
  }

  async jobs(limit = 200, offset = 0): Promise<JobPage> {
    return (await this.request(`/jobs?limit=${limit}&offset=${offset}`)).json();
  }

  async results(jobId: string): Promise<Record<string, unknown>> {
    return (await this.request(`/jobs/${jobId}/results`)).json();
  }

  async dismiss(jobId: string): Promise<Job> {
    return (await this.request(`/jobs/${jobId}`, { method: "DELETE" })).json();
  }
}

export interface Settings {
  platformUrl: string;
}

export async function loadSettings(url = "settings.json"): Promise<Settings> {
  const response = await fetch(url);
  if (!response.ok) throw new Error(`cannot load ${url}: ${response.status}`);
  return (await response.json()) as Settings;
}
