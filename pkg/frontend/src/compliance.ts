/** Exercise-script compliance, the same rule the service applies:
 * a step is compliant when the stabilized decision matches its
 * (channel, phase) target for >= 70% of its duration; the session score is
 * the fraction of compliant steps among those the stream has started. */

import { decisionParts, ExerciseStep } from "./types.js";

export const MATCH_THRESHOLD = 0.7;

export interface ComplianceResult {
  overall: number;
  fractions: number[];
}

export function complianceScore(
  timeline: Array<[number, string]>,
  script: ExerciseStep[],
  matchThreshold: number = MATCH_THRESHOLD,
): ComplianceResult {
  if (!script.length) return { overall: 0, fractions: [] };
  const streamEnd = (timeline.length ? Math.max(...timeline.map(([t]) => t)) : 0) + 0.25;
  let t0 = 0;
  const fractions: number[] = [];
  let compliant = 0;
  let scored = 0;
  for (const step of script) {
    const t1 = t0 + step.duration_s;
    if (t0 >= streamEnd) break;
    let matched = 0;
    for (const [t, d] of timeline) {
      if (t >= t0 && t < t1) {
        const [ch, ph] = decisionParts(d);
        if (ch === step.channel && ph === step.phase) matched += 0.25;
      }
    }
    const frac = Math.min(matched / step.duration_s, 1.0);
    fractions.push(frac);
    scored += 1;
    if (frac >= matchThreshold) compliant += 1;
    t0 = t1;
  }
  return { overall: scored ? compliant / scored : 0, fractions };
}

/** Step spans on the session clock: [start, end) per step. */
export function stepSpans(script: ExerciseStep[]): Array<[number, number]> {
  const spans: Array<[number, number]> = [];
  let t0 = 0;
  for (const step of script) {
    spans.push([t0, t0 + step.duration_s]);
    t0 += step.duration_s;
  }
  return spans;
}

export function stepIndexAt(script: ExerciseStep[], t: number): number {
  const spans = stepSpans(script);
  for (let i = 0; i < spans.length; i++) {
    if (t >= spans[i][0] && t < spans[i][1]) return i;
  }
  return t < 0 ? -1 : spans.length;
}
