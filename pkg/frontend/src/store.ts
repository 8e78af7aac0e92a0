/** Session state derived solely from the event stream and the script. */

import { complianceScore, MATCH_THRESHOLD, stepIndexAt, stepSpans } from "./compliance.js";
import { MetricsAggregator, LiveMetrics } from "./metrics.js";
import { DecisionSmoother } from "./smoothing.js";
import { BreathEvent, ConnectionState, decisionParts, ExerciseStep, parseEvent } from "./types.js";

export type StepStatus = "pending" | "active" | "ok" | "fail";

export interface UiSessionState {
  connection: ConnectionState;
  lastEvent: BreathEvent | null;
  stabilized: string;
  metrics: LiveMetrics;
  script: ExerciseStep[];
  stepIndex: number; // index into script; script.length when finished
  countdownS: number;
  stepStatuses: StepStatus[];
  stepFractions: number[];
  compliance: number | null;
  errorCount: number;
}

export class SessionStore {
  private smoother = new DecisionSmoother();
  private aggregator = new MetricsAggregator();
  private timeline: Array<[number, string]> = [];
  private listeners: Array<(s: UiSessionState) => void> = [];
  state: UiSessionState;

  constructor(script: ExerciseStep[] = []) {
    this.state = {
      connection: "idle",
      lastEvent: null,
      stabilized: "uncertain",
      metrics: new MetricsAggregator().snapshot(),
      script,
      stepIndex: script.length ? 0 : -1,
      countdownS: script.length ? script[0].duration_s : 0,
      stepStatuses: script.map((_, i) => (i === 0 ? "active" : "pending")),
      stepFractions: script.map(() => 0),
      compliance: script.length ? null : null,
      errorCount: 0,
    };
  }

  subscribe(fn: (s: UiSessionState) => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  setConnection(state: ConnectionState): void {
    this.state = { ...this.state, connection: state };
    this.emit();
  }

  /** Feed one raw websocket message; malformed input only bumps errorCount. */
  handleMessage(raw: string): void {
    const event = parseEvent(raw);
    if (event === null) {
      this.state = { ...this.state, errorCount: this.state.errorCount + 1 };
      this.emit();
      return;
    }
    const stabilized = this.smoother.update(event.decision);
    this.aggregator.push(event.t, stabilized);
    this.timeline.push([event.t, stabilized]);
    this.state = {
      ...this.state,
      lastEvent: event,
      stabilized,
      metrics: this.aggregator.snapshot(),
      ...this.scriptProgress(event.t),
    };
    this.emit();
  }

  private scriptProgress(t: number) {
    const script = this.state.script;
    if (!script.length) {
      return { stepIndex: -1, countdownS: 0, stepStatuses: [], stepFractions: [], compliance: null };
    }
    const spans = stepSpans(script);
    const idx = stepIndexAt(script, t);
    const { overall, fractions } = complianceScore(this.timeline, script);
    const statuses: StepStatus[] = script.map((_, i) => {
      if (i === idx) return "active";
      if (i > Math.min(idx, fractions.length - 1) && i >= fractions.length) return "pending";
      if (i < fractions.length && i !== idx) {
        // finished steps judged by the shared threshold; future ones pending
        return spans[i][1] <= t + 0.25 ? (fractions[i] >= MATCH_THRESHOLD ? "ok" : "fail") : "pending";
      }
      return "pending";
    });
    const countdown = idx >= 0 && idx < script.length ? Math.max(spans[idx][1] - (t + 0.25), 0) : 0;
    return {
      stepIndex: idx,
      countdownS: countdown,
      stepStatuses: statuses,
      stepFractions: fractions,
      compliance: this.timeline.length ? overall : null,
    };
  }

  /** Stabilized (t, decision) timeline, exposed for the compliance tests. */
  getTimeline(): Array<[number, string]> {
    return [...this.timeline];
  }
}

export function targetLabel(step: ExerciseStep): string {
  const channel = step.channel === "nasal" ? "nose" : "mouth";
  const phase = step.phase === "inhale" ? "Inhale" : "Exhale";
  return `${phase} through ${channel} — ${step.duration_s} s`;
}

export function decisionLabel(decision: string): string {
  const [channel, phase] = decisionParts(decision);
  if (channel === null) return decision === "pause" ? "Pause" : "…";
  const ch = channel === "nasal" ? "Nose" : "Mouth";
  const ph = phase === "inhale" ? "Inhale" : "Exhale";
  return `${ch} • ${ph}`;
}
