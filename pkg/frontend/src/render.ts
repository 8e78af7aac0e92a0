/** Pure view-model construction plus a thin writer onto element-like objects,
 * so rendering is testable without a browser DOM. */

import { decisionLabel, targetLabel, UiSessionState } from "./store.js";

export interface ScoreBar {
  name: string;
  pct: number; // 0..100
}

export interface ViewModel {
  connectionLabel: string;
  connectionClass: string;
  decisionLabel: string;
  channelBars: ScoreBar[];
  phaseBars: ScoreBar[];
  stepLabel: string;
  countdownLabel: string;
  stepBadges: string[]; // css class per script step
  metricsLabel: string;
  complianceLabel: string;
  errorLabel: string;
}

const CONNECTION_LABELS = {
  connected: "Live",
  reconnecting: "Reconnecting…",
  idle: "Not connected",
} as const;

export function buildView(state: UiSessionState): ViewModel {
  const ev = state.lastEvent;
  const channelNames = ["pause", "nasal", "oral"];
  const phaseNames = ["inhale", "exhale"];
  const m = state.metrics;
  const step = state.stepIndex >= 0 && state.stepIndex < state.script.length
    ? state.script[state.stepIndex]
    : null;
  return {
    connectionLabel: CONNECTION_LABELS[state.connection],
    connectionClass: `conn-${state.connection}`,
    decisionLabel: decisionLabel(state.stabilized),
    channelBars: channelNames.map((name, i) => ({
      name,
      pct: Math.round(100 * (ev ? ev.channel_scores[i] : 0)),
    })),
    phaseBars: phaseNames.map((name, i) => ({
      name,
      pct: Math.round(100 * (ev?.phase_scores ? ev.phase_scores[i] : 0)),
    })),
    stepLabel: step
      ? targetLabel(step)
      : state.script.length
        ? "Exercise complete"
        : "Free session",
    countdownLabel: step ? `${state.countdownS.toFixed(1)} s` : "",
    stepBadges: state.stepStatuses.map((s) => `step-${s}`),
    metricsLabel:
      `breaths ${m.totalBreaths} (nose ${m.breathsNasal} / mouth ${m.breathsOral}) · ` +
      `rate ${m.respiratoryRate}/min · inhale ${m.meanInhaleS.toFixed(2)} s · ` +
      `exhale ${m.meanExhaleS.toFixed(2)} s`,
    complianceLabel: state.compliance === null ? "—" : `${Math.round(100 * state.compliance)}%`,
    errorLabel: state.errorCount ? `${state.errorCount} malformed events ignored` : "",
  };
}

export interface ElementLike {
  textContent: string | null;
  className?: string;
}

export interface ViewElements {
  connection: ElementLike;
  decision: ElementLike;
  channelBars: ElementLike[];
  phaseBars: ElementLike[];
  step: ElementLike;
  countdown: ElementLike;
  badges: ElementLike[];
  metrics: ElementLike;
  compliance: ElementLike;
  errors: ElementLike;
}

export function applyView(vm: ViewModel, els: ViewElements): void {
  els.connection.textContent = vm.connectionLabel;
  els.connection.className = vm.connectionClass;
  els.decision.textContent = vm.decisionLabel;
  vm.channelBars.forEach((bar, i) => {
    const el = els.channelBars[i];
    if (el) el.textContent = `${bar.name} ${bar.pct}%`;
  });
  vm.phaseBars.forEach((bar, i) => {
    const el = els.phaseBars[i];
    if (el) el.textContent = `${bar.name} ${bar.pct}%`;
  });
  els.step.textContent = vm.stepLabel;
  els.countdown.textContent = vm.countdownLabel;
  vm.stepBadges.forEach((cls, i) => {
    const el = els.badges[i];
    if (el) el.className = cls;
  });
  els.metrics.textContent = vm.metricsLabel;
  els.compliance.textContent = vm.complianceLabel;
  els.errors.textContent = vm.errorLabel;
}
