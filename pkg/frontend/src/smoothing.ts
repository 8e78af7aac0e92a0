/** Majority-vote decision smoothing, mirroring the service definition:
 * window of 3, ties resolved by most recent, uncertain inherits the last
 * stabilized output. */

export class DecisionSmoother {
  private recent: string[] = [];
  private last = "uncertain";

  constructor(private window: number = 3) {
    if (window < 1) throw new Error("smoothing window must be >= 1");
  }

  update(decision: string): string {
    if (decision === "uncertain") return this.last;
    this.recent.push(decision);
    if (this.recent.length > this.window) this.recent.shift();
    const counts = new Map<string, number>();
    for (const d of this.recent) counts.set(d, (counts.get(d) ?? 0) + 1);
    const top = Math.max(...counts.values());
    for (let i = this.recent.length - 1; i >= 0; i--) {
      if (counts.get(this.recent[i]) === top) {
        this.last = this.recent[i];
        return this.last;
      }
    }
    throw new Error("unreachable");
  }
}

export function smooth(decisions: string[], window = 3): string[] {
  const sm = new DecisionSmoother(window);
  return decisions.map((d) => sm.update(d));
}
