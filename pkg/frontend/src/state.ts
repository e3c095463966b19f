/** Single state store: all UI state updates flow through one serialized
 * reducer-style setter, so concurrent run updates cannot interleave. */

import type { ScenarioRun } from "./runs.js";

export interface AppState {
  runs: ScenarioRun[];
  selectedProcessId: string | null;
  comparison: [string, string] | null; // runIds
  banner: string | null;
}

export const initialState: AppState = {
  runs: [],
  selectedProcessId: null,
  comparison: null,
  banner: null,
};

type Listener = (state: AppState) => void;

export class Store {
  private state: AppState;
  private listeners = new Set<Listener>();

  constructor(state: AppState = initialState) {
    this.state = state;
  }

  get(): AppState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  update(mutate: (state: AppState) => AppState): AppState {
    this.state = mutate(this.state);
    for (const listener of this.listeners) listener(this.state);
    return this.state;
  }

  upsertRun(run: ScenarioRun): void {
    this.update((state) => {
      const index = state.runs.findIndex((existing) => existing.runId === run.runId);
      const runs = [...state.runs];
      if (index >= 0) runs[index] = run;
      else runs.unshift(run);
      return { ...state, runs };
    });
  }

  setBanner(banner: string | null): void {
    this.update((state) => ({ ...state, banner }));
  }
}
