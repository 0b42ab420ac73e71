// Typed client for the preftune session service. The UI consumes this API
// surface and nothing else.

export interface ParamView {
  name: string;
  value: number;
  unit_label: string;
  lower: number;
  upper: number;
}

export interface OptionView {
  params: ParamView[];
}

export interface Progress {
  phase: string;
  iteration: number;
  budget: number;
  init_pairs_done?: number;
  n_init_pairs?: number;
}

export interface QueryPayload {
  query_id: string;
  option_A: OptionView;
  option_B: OptionView;
  progress: Progress;
  trial: string;
}

export interface EstimateEntry {
  iteration: number;
  params: ParamView[];
  posterior_mean: number;
}

export interface EstimatePayload {
  recommendation: EstimateEntry;
  history: EstimateEntry[];
  stop_reason: string;
  status: string;
}

export interface SessionRecord {
  session_id: string;
  kind: string;
  status: string;
  stop_reason?: string;
  progress?: Progress;
  recognition_rate?: number | null;
  pairs_total?: number;
  pairs_answered?: number;
  complete?: boolean;
  [key: string]: unknown;
}

export interface Ack {
  accepted: boolean;
  query_id: string;
  next_state: string;
  stop_reason?: string;
  recognition_rate?: number | null;
}

export type Choice = "A" | "B" | "no_preference";

export class StaleQueryError extends Error {}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
  }

  async createSession(config: Record<string, unknown>): Promise<string> {
    const res = await this.request("/sessions", {
      method: "POST",
      body: JSON.stringify(config),
    });
    if (!res.ok) throw new Error(`create failed: ${res.status}`);
    const body = await res.json();
    return body.session_id as string;
  }

  async getSession(id: string): Promise<SessionRecord> {
    const res = await this.request(`/sessions/${id}`);
    if (!res.ok) throw new Error(`session lookup failed: ${res.status}`);
    return (await res.json()) as SessionRecord;
  }

  /** Returns null when no query is pending (the session may be finished). */
  async getQuery(id: string): Promise<QueryPayload | null> {
    const res = await this.request(`/sessions/${id}/query`);
    if (res.status === 409) return null;
    if (!res.ok) throw new Error(`query fetch failed: ${res.status}`);
    return (await res.json()) as QueryPayload;
  }

  async postResponse(id: string, queryId: string, choice: Choice): Promise<Ack> {
    const res = await this.request(`/sessions/${id}/response`, {
      method: "POST",
      body: JSON.stringify({ query_id: queryId, choice }),
    });
    if (res.status === 409) throw new StaleQueryError(await res.text());
    if (!res.ok) throw new Error(`response rejected: ${res.status}`);
    return (await res.json()) as Ack;
  }

  async getEstimate(id: string): Promise<EstimatePayload | null> {
    const res = await this.request(`/sessions/${id}/estimate`);
    if (res.status === 409) return null;
    if (!res.ok) throw new Error(`estimate fetch failed: ${res.status}`);
    return (await res.json()) as EstimatePayload;
  }

  async startValidation(sessionIds: string[], seed = 0): Promise<string> {
    const res = await this.request("/validation", {
      method: "POST",
      body: JSON.stringify({ session_ids: sessionIds, seed }),
    });
    if (!res.ok) throw new Error(`validation start failed: ${res.status}`);
    return (await res.json()).session_id as string;
  }

  async getValidation(id: string): Promise<SessionRecord> {
    const res = await this.request(`/validation/${id}`);
    if (!res.ok) throw new Error(`validation lookup failed: ${res.status}`);
    return (await res.json()) as SessionRecord;
  }
}
