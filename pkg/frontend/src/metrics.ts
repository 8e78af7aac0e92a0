/** Client-side therapy metrics over the stabilized decision stream,
 * mirroring the service aggregator: a breath is an inhale run later followed
 * by an exhale run, counted when the exhale run starts; pauses in between
 * keep the pending breath alive. */

import { decisionParts } from "./types.js";

export interface LiveMetrics {
  totalBreaths: number;
  respiratoryRate: number;
  meanInhaleS: number;
  meanExhaleS: number;
  breathsNasal: number;
  breathsOral: number;
  totalEvents: number;
}

const RATE_WINDOW_S = 60;

export class MetricsAggregator {
  private runPhase: string | null = null;
  private runLen = 0;
  private runChannels = new Map<string, number>();
  private pendingChannel: string | null = null;
  private breathTimes: number[] = [];
  private inhaleRuns: number[] = [];
  private exhaleRuns: number[] = [];
  private totals = { breaths: 0, nasal: 0, oral: 0 };
  private events = 0;
  private lastT = 0;

  push(t: number, stabilized: string): void {
    this.events += 1;
    this.lastT = t;
    const [channel, phase] = decisionParts(stabilized);
    if (phase !== this.runPhase) {
      this.closeRun();
      this.runPhase = phase;
      if (phase === "exhale" && this.pendingChannel !== null) {
        this.totals.breaths += 1;
        if (this.pendingChannel === "nasal") this.totals.nasal += 1;
        else if (this.pendingChannel === "oral") this.totals.oral += 1;
        this.breathTimes.push(t);
        this.pendingChannel = null;
      }
    }
    if (phase !== null) {
      this.runLen += 1;
      this.runChannels.set(channel!, (this.runChannels.get(channel!) ?? 0) + 1);
    }
  }

  private closeRun(): void {
    if (this.runPhase === "inhale" && this.runLen) {
      this.inhaleRuns.push(this.runLen * 0.25);
      this.pendingChannel = this.majorityChannel();
    } else if (this.runPhase === "exhale" && this.runLen) {
      this.exhaleRuns.push(this.runLen * 0.25);
    }
    this.runLen = 0;
    this.runChannels = new Map();
  }

  private majorityChannel(): string | null {
    let best: string | null = null;
    let bestCount = -1;
    for (const [ch, count] of this.runChannels) {
      if (count > bestCount) {
        best = ch;
        bestCount = count;
      }
    }
    return best;
  }

  snapshot(): LiveMetrics {
    const inhales = [...this.inhaleRuns];
    const exhales = [...this.exhaleRuns];
    if (this.runPhase === "inhale" && this.runLen) inhales.push(this.runLen * 0.25);
    else if (this.runPhase === "exhale" && this.runLen) exhales.push(this.runLen * 0.25);
    const now = this.events ? this.lastT + 0.25 : 0;
    const recent = this.breathTimes.filter((t) => t > now - RATE_WINDOW_S);
    const mean = (xs: number[]) => (xs.length ? xs.reduce((a, b) => a + b, 0) / xs.length : 0);
    return {
      totalBreaths: this.totals.breaths,
      respiratoryRate: recent.length,
      meanInhaleS: mean(inhales),
      meanExhaleS: mean(exhales),
      breathsNasal: this.totals.nasal,
      breathsOral: this.totals.oral,
      totalEvents: this.events,
    };
  }
}
