import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { complianceScore, stepIndexAt, stepSpans } from "../src/compliance.js";
import { smooth } from "../src/smoothing.js";
import { BreathEvent, ExerciseStep } from "../src/types.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/compliance.json", import.meta.url), "utf-8"),
) as {
  script: ExerciseStep[];
  perfect_events: BreathEvent[];
  imperfect_events: BreathEvent[];
  server: {
    perfect_compliance: number;
    perfect_fractions: number[];
    imperfect_compliance: number;
    imperfect_fractions: number[];
  };
};

function scoreEvents(events: BreathEvent[]) {
  const stabilized = smooth(events.map((e) => e.decision));
  const timeline: Array<[number, string]> = events.map((e, i) => [e.t, stabilized[i]]);
  return complianceScore(timeline, fixture.script);
}

describe("compliance shared definition", () => {
  it("script-matched fixture stream yields 100% compliance", () => {
    const { overall, fractions } = scoreEvents(fixture.perfect_events);
    expect(overall).toBe(1.0);
    fractions.forEach((f, i) => {
      expect(Math.abs(f - fixture.server.perfect_fractions[i])).toBeLessThan(1e-9);
    });
  });

  it("client score equals the server score within 1%", () => {
    const perfect = scoreEvents(fixture.perfect_events);
    expect(Math.abs(perfect.overall - fixture.server.perfect_compliance)).toBeLessThan(0.01);
    const imperfect = scoreEvents(fixture.imperfect_events);
    expect(Math.abs(imperfect.overall - fixture.server.imperfect_compliance)).toBeLessThan(0.01);
    imperfect.fractions.forEach((f, i) => {
      expect(Math.abs(f - fixture.server.imperfect_fractions[i])).toBeLessThan(0.01);
    });
  });

  it("pausing through a step marks it non-compliant below 70%", () => {
    const script: ExerciseStep[] = [{ channel: "oral", phase: "exhale", duration_s: 4 }];
    const timeline: Array<[number, string]> = [];
    for (let k = 0; k < 8; k++) timeline.push([0.25 * k, "pause"]);
    for (let k = 8; k < 16; k++) timeline.push([0.25 * k, "mouth-exhale"]);
    const { overall, fractions } = complianceScore(timeline, script);
    expect(fractions[0]).toBeCloseTo(0.5, 9);
    expect(overall).toBe(0);
  });

  it("only started steps are scored", () => {
    const script: ExerciseStep[] = [
      { channel: "nasal", phase: "inhale", duration_s: 2 },
      { channel: "oral", phase: "exhale", duration_s: 2 },
    ];
    const timeline: Array<[number, string]> = [[0, "nose-inhale"], [0.25, "nose-inhale"]];
    const { fractions } = complianceScore(timeline, script);
    expect(fractions.length).toBe(1);
  });

  it("step spans and index walk the clock", () => {
    const script: ExerciseStep[] = [
      { channel: "nasal", phase: "inhale", duration_s: 4 },
      { channel: "oral", phase: "exhale", duration_s: 6 },
    ];
    expect(stepSpans(script)).toEqual([
      [0, 4],
      [4, 10],
    ]);
    expect(stepIndexAt(script, 0)).toBe(0);
    expect(stepIndexAt(script, 3.99)).toBe(0);
    expect(stepIndexAt(script, 4)).toBe(1);
    expect(stepIndexAt(script, 10)).toBe(2); // past the end
  });
});
