/** Wire formats shared with the breathsense service. */

export interface BreathEvent {
  t: number;
  decision: string;
  channel_scores: [number, number, number]; // [pause, nasal, oral]
  phase_scores: [number, number] | null; // [inhale, exhale]; null on pause path
  latency_ms: number;
}

export interface SessionMetricsWire {
  total_breaths: number;
  respiratory_rate: number;
  mean_inhale_s: number;
  mean_exhale_s: number;
  breaths_nasal: number;
  breaths_oral: number;
  total_events: number;
  dropped_segments: number;
  compliance?: number;
}

export interface ExerciseStep {
  channel: "nasal" | "oral";
  phase: "inhale" | "exhale";
  duration_s: number;
}

export type ConnectionState = "connected" | "reconnecting" | "idle";

export const DECISIONS = [
  "pause",
  "nose-inhale",
  "nose-exhale",
  "mouth-inhale",
  "mouth-exhale",
  "uncertain",
] as const;

const DECISION_PARTS: Record<string, [string, string]> = {
  "nose-inhale": ["nasal", "inhale"],
  "nose-exhale": ["nasal", "exhale"],
  "mouth-inhale": ["oral", "inhale"],
  "mouth-exhale": ["oral", "exhale"],
};

/** (channel, phase) of a decision; [null, null] for pause/uncertain. */
export function decisionParts(decision: string): [string | null, string | null] {
  return DECISION_PARTS[decision] ?? [null, null];
}

/** Strict validation of one wire event; returns null on any malformation. */
export function parseEvent(raw: unknown): BreathEvent | null {
  let obj: unknown = raw;
  if (typeof raw === "string") {
    try {
      obj = JSON.parse(raw);
    } catch {
      return null;
    }
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) return null;
  const e = obj as Record<string, unknown>;
  if (typeof e.t !== "number" || !Number.isFinite(e.t)) return null;
  if (typeof e.decision !== "string" || !(DECISIONS as readonly string[]).includes(e.decision)) return null;
  const ch = e.channel_scores;
  if (!Array.isArray(ch) || ch.length !== 3 || !ch.every((s) => typeof s === "number" && Number.isFinite(s))) {
    return null;
  }
  const ph = e.phase_scores;
  if (ph !== null && ph !== undefined) {
    if (!Array.isArray(ph) || ph.length !== 2 || !ph.every((s) => typeof s === "number" && Number.isFinite(s))) {
      return null;
    }
  }
  const latency = typeof e.latency_ms === "number" && Number.isFinite(e.latency_ms) ? e.latency_ms : 0;
  return {
    t: e.t,
    decision: e.decision,
    channel_scores: ch as [number, number, number],
    phase_scores: (ph ?? null) as [number, number] | null,
    latency_ms: latency,
  };
}
