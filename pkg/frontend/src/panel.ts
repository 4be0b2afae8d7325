/** View models for the nuance-flag panel and the telemetry drawer; pure
 * functions over the session state so they are trivially testable. */

import { CostEntry, DialogueState, NuanceKind, NUANCE_KINDS } from "./api.js";
import { TurnTelemetry } from "./session.js";

export interface FlagRow {
  kind: NuanceKind;
  labels: string[];       // value labels plus the trailing free/neutral slot
  activeIndex: number;
  pinned: boolean;
}

export function flagPanelModel(state: DialogueState | null): FlagRow[] {
  if (!state) return [];
  return NUANCE_KINDS.map((kind) => {
    const values = state.nuance_values[kind] ?? [];
    const freeLabel = kind === "tone" ? "neutral (free)" : "free";
    return {
      kind,
      labels: [...values, freeLabel],
      activeIndex: state.nuance_flags[kind] ?? values.length,
      pinned: state.pinned.includes(kind),
    };
  });
}

export interface TelemetryRow {
  label: string;
  value: string;
}

function isCostEntry(value: CostEntry | number | undefined): value is CostEntry {
  return typeof value === "object" && value !== null && "tokens" in value;
}

export function telemetryModel(telemetry: TurnTelemetry): TelemetryRow[] {
  const rows: TelemetryRow[] = [];
  const first = telemetry.first;
  if (first) {
    for (const [kind, ms] of Object.entries(first.latencies_ms)) {
      rows.push({ label: `${kind} latency`, value: `${(ms / 1000).toFixed(2)} s` });
    }
    rows.push({ label: "detected tone", value: first.detected_tone });
    if (first.detected_topic) rows.push({ label: "detected topic", value: first.detected_topic });
    if (first.detected_sentiment) {
      rows.push({ label: "detected sentiment", value: first.detected_sentiment });
    }
    for (const [section, entry] of Object.entries(first.diversity_cost)) {
      if (isCostEntry(entry)) {
        rows.push({
          label: `cost ${section}`,
          value: `${entry.tokens} tok (${(entry.fraction * 100).toFixed(1)}%)`,
        });
      }
    }
  }
  const continuation = telemetry.continuation;
  if (continuation) {
    rows.push({
      label: "continuation latency",
      value: `${(continuation.latency_ms / 1000).toFixed(2)} s`,
    });
    rows.push({ label: "sentence type", value: continuation.sentence_type });
  }
  return rows;
}
