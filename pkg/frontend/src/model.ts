// View-model state and the pure update rules the views rely on.
// Everything clinical on screen comes from the device API responses; these
// functions only merge, cap and order -- they never fabricate values.

import type { AlarmJson, CardJson, SampleJson } from "./api.js";

export interface AlarmRow extends AlarmJson {
  /** an ack round-trip is in flight (optimistic) */
  pending: boolean;
}

export interface UiError {
  id: number;
  code: string;
  detail: string;
}

export const SERIES_CAP = 120;

let nextErrorId = 1;

export function makeError(code: string, detail = ""): UiError {
  return { id: nextErrorId++, code, detail };
}

/** Merge freshly polled samples into the per-kind rolling series. */
export function mergeSamples(
  series: Record<string, SampleJson[]>,
  incoming: SampleJson[],
  cap = SERIES_CAP,
): Record<string, SampleJson[]> {
  const merged: Record<string, SampleJson[]> = { ...series };
  for (const sample of incoming) {
    const row = merged[sample.kind] ? [...merged[sample.kind]] : [];
    const last = row[row.length - 1];
    // polling re-reads the same window; only append genuinely new points
    if (
      !last ||
      sample.timestamp > last.timestamp ||
      (sample.timestamp === last.timestamp && sample.value !== last.value)
    ) {
      row.push(sample);
    }
    merged[sample.kind] = row.slice(-cap);
  }
  return merged;
}

/**
 * Merge server alarms into the view rows. Acknowledgment is sticky: a row
 * that has ever been shown acknowledged never renders unacknowledged again,
 * whatever a (stale or reordered) poll claims.
 */
export function mergeAlarms(rows: AlarmRow[], server: AlarmJson[]): AlarmRow[] {
  const known = new Map(rows.map((row) => [row.alarm_id, row]));
  const merged: AlarmRow[] = [];
  for (const alarm of server) {
    const existing = known.get(alarm.alarm_id);
    if (!existing) {
      merged.push({ ...alarm, pending: false });
      continue;
    }
    const acknowledged = existing.acknowledged || alarm.acknowledged;
    merged.push({
      ...alarm,
      acknowledged,
      acknowledged_by: alarm.acknowledged_by ?? existing.acknowledged_by,
      pending: existing.pending && !acknowledged,
    });
  }
  // never drop a row the server momentarily omitted
  for (const row of rows) {
    if (!server.some((alarm) => alarm.alarm_id === row.alarm_id)) {
      merged.push(row);
    }
  }
  return merged.sort((a, b) => a.alarm_id - b.alarm_id);
}

/** Optimistic ack: flip immediately, remember it is unconfirmed. */
export function optimisticAck(rows: AlarmRow[], id: number, by: string): AlarmRow[] {
  return rows.map((row) =>
    row.alarm_id === id && !row.acknowledged
      ? { ...row, acknowledged: true, acknowledged_by: by, pending: true }
      : row,
  );
}

export type AckOutcome =
  | { kind: "confirmed"; alarm: AlarmJson }
  | { kind: "conflict"; server: AlarmJson | null }
  | { kind: "failed" };

/**
 * Settle an optimistic ack. A 409 conflict means somebody acknowledged it
 * first: adopt the server row (still acknowledged -- no revert). Only a
 * transport failure rolls the optimistic flip back.
 */
export function settleAck(rows: AlarmRow[], id: number, outcome: AckOutcome): AlarmRow[] {
  return rows.map((row) => {
    if (row.alarm_id !== id) return row;
    if (outcome.kind === "confirmed") {
      return { ...outcome.alarm, pending: false };
    }
    if (outcome.kind === "conflict") {
      const server = outcome.server;
      return server
        ? { ...server, acknowledged: true, pending: false }
        : { ...row, pending: false };
    }
    return { ...row, acknowledged: false, acknowledged_by: null, pending: false };
  });
}

export function languageForCard(card: CardJson | null): "en" | "ro" {
  return card?.language === "ro" ? "ro" : "en";
}
