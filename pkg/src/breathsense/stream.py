"""Real-time inference: ring buffer, channel->phase cascade, smoothing, metrics."""

import json
import time
from collections import Counter, deque
from dataclasses import dataclass

import numpy as np

from .errors import BreathSenseError
from .features import extract, standardize
from .labels import SEGMENT_SAMPLES, STRIDE_SAMPLES, Segment
from .training import CHANNEL, PHASE, LoadedModel

UNCERTAIN = "uncertain"
PAUSE = "pause"

DECISIONS = ("pause", "nose-inhale", "nose-exhale", "mouth-inhale", "mouth-exhale", UNCERTAIN)

_DECISION_PARTS = {
    "nose-inhale": ("nasal", "inhale"),
    "nose-exhale": ("nasal", "exhale"),
    "mouth-inhale": ("oral", "inhale"),
    "mouth-exhale": ("oral", "exhale"),
}


class ModelFeatureMismatch(BreathSenseError):
    pass


def decision_parts(decision):
    """(channel, phase) of a decision; (None, None) for pause/uncertain."""
    return _DECISION_PARTS.get(decision, (None, None))


@dataclass
class BreathEvent:
    t_start: float
    decision: str
    channel_scores: list  # [pause, nasal, oral]
    phase_scores: list = None  # [inhale, exhale]; absent on the pause path
    latency_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "t": self.t_start,
            "decision": self.decision,
            "channel_scores": [round(float(s), 6) for s in self.channel_scores],
            "phase_scores": None if self.phase_scores is None else [round(float(s), 6) for s in self.phase_scores],
            "latency_ms": round(float(self.latency_ms), 3),
        }


@dataclass
class SessionMetrics:
    total_breaths: int = 0
    respiratory_rate: float = 0.0
    mean_inhale_s: float = 0.0
    mean_exhale_s: float = 0.0
    breaths_nasal: int = 0
    breaths_oral: int = 0
    total_events: int = 0
    dropped_segments: int = 0
    compliance: float = None

    def to_json(self) -> dict:
        out = {
            "total_breaths": self.total_breaths,
            "respiratory_rate": self.respiratory_rate,
            "mean_inhale_s": round(self.mean_inhale_s, 4),
            "mean_exhale_s": round(self.mean_exhale_s, 4),
            "breaths_nasal": self.breaths_nasal,
            "breaths_oral": self.breaths_oral,
            "total_events": self.total_events,
            "dropped_segments": self.dropped_segments,
        }
        if self.compliance is not None:
            out["compliance"] = round(self.compliance, 4)
        return out


def classify_segment(samples, channel: LoadedModel, phase: LoadedModel, threshold: float = 0.5) -> BreathEvent:
    """One cascade decision for an 8000-sample window (t_start filled by caller)."""
    if channel.spec.role != CHANNEL or phase.spec.role != PHASE:
        raise ModelFeatureMismatch("classify_segment needs a channel model and a phase model")
    if channel.spec.feature_kind != phase.spec.feature_kind:
        raise ModelFeatureMismatch(
            f"feature kinds differ: {channel.spec.feature_kind} vs {phase.spec.feature_kind}"
        )
    t0 = time.perf_counter()
    seg = Segment(clip_id="stream", start_s=0.0, samples=np.asarray(samples, dtype=np.float32))
    x = standardize(extract(seg, channel.spec.feature_kind).values)[None, None, :, :]
    ch_scores = channel.network.forward(x, train=False)[0]
    p_pause, p_nasal, p_oral = (float(s) for s in ch_scores)

    if max(p_pause, p_nasal, p_oral) < threshold:
        decision, ph_scores = UNCERTAIN, None
    elif p_pause >= threshold and p_pause > p_nasal and p_pause > p_oral:
        decision, ph_scores = PAUSE, None
    else:
        ph = phase.network.forward(x, train=False)[0]
        ph_scores = [float(ph[0]), float(ph[1])]
        chan = "nose" if p_nasal >= p_oral else "mouth"
        decision = f"{chan}-inhale" if ph_scores[0] >= ph_scores[1] else f"{chan}-exhale"

    latency = (time.perf_counter() - t0) * 1000.0
    return BreathEvent(
        t_start=0.0,
        decision=decision,
        channel_scores=[p_pause, p_nasal, p_oral],
        phase_scores=ph_scores,
        latency_ms=latency,
    )


class DecisionSmoother:
    """Majority vote over the trailing window; uncertain inherits the last output."""

    def __init__(self, window: int = 3):
        if window < 1:
            raise ValueError("smoothing window must be >= 1")
        self._recent = deque(maxlen=window)
        self._last = UNCERTAIN

    def update(self, decision: str) -> str:
        if decision == UNCERTAIN:
            return self._last
        self._recent.append(decision)
        counts = Counter(self._recent)
        top = max(counts.values())
        for cand in reversed(self._recent):  # ties resolved by most recent
            if counts[cand] == top:
                self._last = cand
                return cand
        raise AssertionError("unreachable")


def smooth(decisions, window: int = 3):
    sm = DecisionSmoother(window)
    return [sm.update(d) for d in decisions]


class MetricsAggregator:
    """Incremental therapy metrics over a stabilized decision stream.

    A breath is a maximal inhale run later followed by an exhale run; it is
    counted when the exhale run starts and attributed to the majority channel
    of its inhale run. Pauses between the runs do not cancel the pending breath.
    """

    RATE_WINDOW_S = 60.0

    def __init__(self):
        self._run_phase = None
        self._run_len = 0
        self._run_channels = Counter()
        self._pending_channel = None
        self._breath_times = deque()
        self._inhale_runs = []
        self._exhale_runs = []
        self._totals = Counter()
        self._events = 0
        self._last_t = 0.0

    def push(self, t: float, stabilized_decision: str) -> None:
        self._events += 1
        self._last_t = t
        channel, phase = decision_parts(stabilized_decision)
        if phase != self._run_phase:
            self._close_run()
            self._run_phase = phase
            if phase == "exhale" and self._pending_channel is not None:
                self._totals["breaths"] += 1
                self._totals[self._pending_channel] += 1
                self._breath_times.append(t)
                self._pending_channel = None
        if phase is not None:
            self._run_len += 1
            self._run_channels[channel] += 1

    def _close_run(self):
        if self._run_phase == "inhale" and self._run_len:
            self._inhale_runs.append(self._run_len * 0.25)
            self._pending_channel = self._run_channels.most_common(1)[0][0]
        elif self._run_phase == "exhale" and self._run_len:
            self._exhale_runs.append(self._run_len * 0.25)
        self._run_len = 0
        self._run_channels = Counter()

    def snapshot(self, dropped_segments: int = 0) -> SessionMetrics:
        inhales = list(self._inhale_runs)
        exhales = list(self._exhale_runs)
        if self._run_phase == "inhale" and self._run_len:
            inhales.append(self._run_len * 0.25)
        elif self._run_phase == "exhale" and self._run_len:
            exhales.append(self._run_len * 0.25)
        now = self._last_t + 0.25 if self._events else 0.0
        while self._breath_times and self._breath_times[0] <= now - self.RATE_WINDOW_S:
            self._breath_times.popleft()
        return SessionMetrics(
            total_breaths=self._totals["breaths"],
            respiratory_rate=float(len(self._breath_times)),
            mean_inhale_s=float(np.mean(inhales)) if inhales else 0.0,
            mean_exhale_s=float(np.mean(exhales)) if exhales else 0.0,
            breaths_nasal=self._totals["nasal"],
            breaths_oral=self._totals["oral"],
            total_events=self._events,
            dropped_segments=dropped_segments,
        )


def aggregate(stream, dropped_segments: int = 0) -> SessionMetrics:
    """Metrics of a whole (t, stabilized decision) stream; chunking-invariant."""
    agg = MetricsAggregator()
    for t, decision in stream:
        agg.push(t, decision)
    return agg.snapshot(dropped_segments)


class BreathMonitor:
    """Buffers a 16 kHz sample feed and classifies every 250 ms window.

    max_backlog bounds the number of complete-but-unprocessed windows; when
    exceeded the oldest are dropped (oldest-first) and counted. Leave it None
    for offline/batch use.
    """

    def __init__(self, channel: LoadedModel, phase: LoadedModel, threshold: float = 0.5,
                 smooth_window: int = 3, max_backlog: int = None):
        if channel.spec.feature_kind != phase.spec.feature_kind:
            raise ModelFeatureMismatch("channel/phase models use different feature kinds")
        self.channel = channel
        self.phase = phase
        self.threshold = threshold
        self.max_backlog = max_backlog
        self.smoother = DecisionSmoother(smooth_window)
        self.aggregator = MetricsAggregator()
        self.drop_count = 0
        self._buf = np.zeros(0, dtype=np.float32)
        self._base = 0  # absolute sample index of _buf[0]
        self._next = 0  # absolute sample index of the next window start

    def push_samples(self, chunk) -> list:
        """Append samples; returns the BreathEvents newly produced."""
        chunk = np.asarray(chunk, dtype=np.float32).reshape(-1)
        if chunk.size:
            self._buf = np.concatenate([self._buf, chunk])
        events = []
        while True:
            total = self._base + self._buf.shape[0]
            avail = total - self._next
            if avail < SEGMENT_SAMPLES:
                break
            if self.max_backlog is not None:
                pending = (avail - SEGMENT_SAMPLES) // STRIDE_SAMPLES + 1
                if pending > self.max_backlog:
                    skip = pending - self.max_backlog
                    self._next += skip * STRIDE_SAMPLES
                    self.drop_count += skip
                    continue
            start = self._next - self._base
            window = self._buf[start : start + SEGMENT_SAMPLES]
            event = classify_segment(window, self.channel, self.phase, self.threshold)
            event.t_start = self._next / 16000.0
            stabilized = self.smoother.update(event.decision)
            self.aggregator.push(event.t_start, stabilized)
            events.append(event)
            self._next += STRIDE_SAMPLES
            if self._next - self._base > 4 * SEGMENT_SAMPLES:
                cut = self._next - self._base - SEGMENT_SAMPLES
                self._buf = self._buf[cut:]
                self._base += cut
        return events

    def metrics(self) -> SessionMetrics:
        return self.aggregator.snapshot(self.drop_count)


# --- exercise scripts and compliance -----------------------------------------

@dataclass
class ExerciseStep:
    channel: str  # nasal | oral
    phase: str  # inhale | exhale
    duration_s: float


def parse_script(data) -> list:
    steps = []
    for item in data:
        steps.append(ExerciseStep(item["channel"], item["phase"], float(item["duration_s"])))
    return steps


def compliance_score(timeline, script, match_threshold: float = 0.7):
    """Share of script steps whose target matches >= 70% of their duration.

    timeline: (t, stabilized decision) pairs, each covering 0.25 s. Only steps
    that have started by the end of the stream are scored. Returns
    (overall fraction, per-step match fractions).
    """
    if not script:
        return None, []
    stream_end = max((t for t, _ in timeline), default=0.0) + 0.25
    t0 = 0.0
    fractions = []
    compliant = 0
    scored = 0
    for step in script:
        t1 = t0 + step.duration_s
        if t0 >= stream_end:
            break
        matched = sum(
            0.25
            for t, d in timeline
            if t0 <= t < t1 and decision_parts(d) == (step.channel, step.phase)
        )
        frac = min(matched / step.duration_s, 1.0)
        fractions.append(frac)
        scored += 1
        if frac >= match_threshold:
            compliant += 1
        t0 = t1
    overall = compliant / scored if scored else 0.0
    return overall, fractions


def event_line(event: BreathEvent) -> str:
    """One JSONL line per event (session logs and CLI output)."""
    return json.dumps(event.to_json())


def metrics_line(metrics: SessionMetrics) -> str:
    return json.dumps(metrics.to_json())
