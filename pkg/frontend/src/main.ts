/** Browser entry point: connect to the service stream and drive the view. */

import { applyView, buildView, ElementLike, ViewElements } from "./render.js";
import { SessionStore } from "./store.js";
import { ExerciseStep } from "./types.js";
import { ReconnectingSocket } from "./wsClient.js";

// nasal-inhale / oral-exhale pattern, the default breathing-exercise script
export const DEFAULT_SCRIPT: ExerciseStep[] = Array.from({ length: 6 }).flatMap(() => [
  { channel: "nasal", phase: "inhale", duration_s: 4 },
  { channel: "oral", phase: "exhale", duration_s: 6 },
]);

function el(id: string): ElementLike {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function els(prefix: string, count: number): ElementLike[] {
  const container = document.getElementById(prefix);
  if (!container) return [];
  container.innerHTML = "";
  const out: ElementLike[] = [];
  for (let i = 0; i < count; i++) {
    const span = document.createElement("span");
    span.className = "bar";
    container.appendChild(span);
    out.push(span);
  }
  return out;
}

export function boot(wsUrl: string, script: ExerciseStep[] = DEFAULT_SCRIPT): void {
  const store = new SessionStore(script);
  const view: ViewElements = {
    connection: el("connection"),
    decision: el("decision"),
    channelBars: els("channel-bars", 3),
    phaseBars: els("phase-bars", 2),
    step: el("step"),
    countdown: el("countdown"),
    badges: els("badges", script.length),
    metrics: el("metrics"),
    compliance: el("compliance"),
    errors: el("errors"),
  };
  store.subscribe((state) => applyView(buildView(state), view));
  const socket = new ReconnectingSocket({
    url: wsUrl,
    onMessage: (raw) => store.handleMessage(raw),
    onState: (s) => store.setConnection(s),
  });
  socket.connect();
  applyView(buildView(store.state), view);
}

declare global {
  interface Window {
    breathsenseBoot: typeof boot;
  }
}

if (typeof window !== "undefined") {
  window.breathsenseBoot = boot;
}
