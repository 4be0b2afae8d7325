/** Turn-flow state machine, DOM-free so it can be tested headless.
 *
 * One turn = two hub calls; the transcript gains bubbles in phase order
 * filler -> reply -> continuation. Exactly one turn may be in flight, the
 * dialogue state is only ever replaced by server responses, and pinning is
 * the single local mutation allowed (and only between turns). A failed turn
 * rolls the state back to the pre-turn snapshot.
 */

import {
  ContinuationTelemetry,
  DialogueState,
  FirstTelemetry,
  HubClient,
  NuanceKind,
  NUANCE_KINDS,
} from "./api.js";

export type Phase = "filler" | "reply" | "continuation";

export interface Bubble {
  speaker: "user" | "robot";
  text: string;
  turn: number;
  phase?: Phase;
  transient?: boolean; // typing-style rendering for the filler
  error?: boolean;
}

export interface TurnTelemetry {
  first?: FirstTelemetry;
  continuation?: ContinuationTelemetry;
}

type Listener = () => void;

function cloneState(state: DialogueState): DialogueState {
  return JSON.parse(JSON.stringify(state)) as DialogueState;
}

export class SessionController {
  readonly sessionId: string;
  state: DialogueState | null = null;
  transcript: Bubble[] = [];
  inFlight = false;
  lastError: string | null = null;
  telemetry: TurnTelemetry = {};
  private turn = 0;
  private listeners: Listener[] = [];

  constructor(private readonly client: HubClient, sessionId?: string) {
    this.sessionId = sessionId ?? `ui-${Math.random().toString(36).slice(2, 10)}`;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async init(): Promise<void> {
    const health = await this.client.health();
    this.state = health.initial_state;
    this.notify();
  }

  canSend(): boolean {
    return this.state !== null && !this.inFlight;
  }

  async sendTurn(text: string): Promise<void> {
    if (!this.state) throw new Error("session not initialized");
    if (this.inFlight) throw new Error("a turn is already in flight");
    const sentence = text.trim();
    if (!sentence) throw new Error("empty sentence");

    const snapshot = cloneState(this.state);
    const turn = this.turn;
    this.inFlight = true;
    this.lastError = null;
    this.transcript.push({ speaker: "user", text: sentence, turn });
    this.notify();

    try {
      const first = await this.client.first(this.sessionId, sentence, this.state);
      this.transcript.push({
        speaker: "robot", text: first.filler_sentence, turn,
        phase: "filler", transient: true,
      });
      this.transcript.push({
        speaker: "robot", text: first.reply_sentence, turn, phase: "reply",
      });
      this.state = first.dialogue_state;
      this.telemetry = { first: first.telemetry };
      this.notify();

      const second = await this.client.continuation(this.sessionId, first.dialogue_state);
      this.transcript.push({
        speaker: "robot", text: second.continuation_sentence, turn, phase: "continuation",
      });
      this.state = second.dialogue_state;
      this.telemetry.continuation = second.telemetry;
      this.turn += 1;
    } catch (error) {
      this.state = snapshot; // failed turns must not leave partial state behind
      this.lastError = error instanceof Error ? error.message : String(error);
      this.transcript.push({
        speaker: "robot", text: `(turn failed: ${this.lastError})`, turn, error: true,
      });
    } finally {
      this.inFlight = false;
      this.notify();
    }
  }

  /** Pin a nuance to a value index, or to the unpaired "free" slot. The flag
   * is set in the client-held state now and the engine holds it there until
   * the pin is cleared. */
  pinNuance(kind: NuanceKind, value: number | "free"): void {
    if (!this.state) throw new Error("session not initialized");
    if (this.inFlight) throw new Error("cannot pin while a turn is in flight");
    const values = this.state.nuance_values[kind];
    const size = values.length + 1;
    const index = value === "free" ? size - 1 : value;
    if (index < 0 || index >= size) throw new Error(`flag index ${index} out of range`);
    this.state.nuance_flags[kind] = index;
    if (!this.state.pinned.includes(kind)) this.state.pinned.push(kind);
    this.notify();
  }

  clearPin(kind: NuanceKind): void {
    if (!this.state) throw new Error("session not initialized");
    if (this.inFlight) throw new Error("cannot unpin while a turn is in flight");
    this.state.pinned = this.state.pinned.filter((k) => k !== kind);
    this.notify();
  }

  clearAllPins(): void {
    for (const kind of NUANCE_KINDS) this.clearPin(kind);
  }

  bubblesForTurn(turn: number): Bubble[] {
    return this.transcript.filter((b) => b.turn === turn);
  }
}
