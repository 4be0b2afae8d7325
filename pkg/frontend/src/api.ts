/** Typed client for the dialogue hub HTTP API. The fetch implementation is
 * injectable so the turn-flow logic is testable without a network. */

export type NuanceKind = "diversity" | "time" | "place" | "tone" | "speech_act";

export const NUANCE_KINDS: NuanceKind[] = ["diversity", "time", "place", "tone", "speech_act"];

/** Client-held dialogue state; the UI treats it as opaque except for the
 * nuance fields (read for the panel, written only by pinning). */
export interface DialogueState {
  version: number;
  current_topic: string;
  coverage: Record<string, number>;
  prefs: Record<string, number>;
  memory: [string, string][];
  nuance_values: Record<NuanceKind, string[]>;
  nuance_flags: Record<NuanceKind, number>;
  last_sentence_type: string | null;
  turn_counter: number;
  pinned: NuanceKind[];
  pending: unknown;
}

export interface CostEntry {
  tokens: number;
  fraction: number;
}

export interface FirstTelemetry {
  latencies_ms: Record<string, number>;
  tokens: Record<string, { prompt: number; completion: number }>;
  detected_tone: string;
  detected_topic: string | null;
  detected_sentiment: string | null;
  diversity_cost: Record<string, CostEntry | number>;
}

export interface ContinuationTelemetry {
  latency_ms: number;
  sentence_type: string;
  diversity_cost: Record<string, CostEntry | number>;
  record: Record<string, unknown>;
}

export interface HealthResponse {
  status: string;
  backend: string;
  topics: number;
  initial_state: DialogueState;
}

export interface FirstResponse {
  filler_sentence: string;
  reply_sentence: string;
  dialogue_state: DialogueState;
  telemetry: FirstTelemetry;
}

export interface ContinuationResponse {
  continuation_sentence: string;
  dialogue_state: DialogueState;
  telemetry: ContinuationTelemetry;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class HubError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "HubError";
  }
}

export class HubClient {
  private readonly fetchImpl: FetchLike;

  constructor(readonly baseUrl: string, fetchImpl?: FetchLike) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new HubError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/v1/health`);
    if (!response.ok) throw new HubError(response.status, response.statusText);
    return (await response.json()) as HealthResponse;
  }

  first(sessionId: string, sentence: string, state: DialogueState): Promise<FirstResponse> {
    return this.post("/v1/dialogue/first", {
      session_id: sessionId,
      client_sentence: sentence,
      dialogue_state: state,
    });
  }

  continuation(sessionId: string, state: DialogueState): Promise<ContinuationResponse> {
    return this.post("/v1/dialogue/continuation", {
      session_id: sessionId,
      dialogue_state: state,
    });
  }
}
