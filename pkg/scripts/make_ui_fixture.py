#!/usr/bin/env python3
"""Regenerate the UI compliance fixture from the service-side definitions.

The frontend test suite replays these event streams through its own
smoothing + compliance implementation and must land on the same scores;
tests/test_ui_fixture.py keeps the Python side pinned to the same file.
"""

import json
from pathlib import Path

from breathsense.stream import BreathEvent, DecisionSmoother, ExerciseStep, compliance_score

FIXTURE_PATH = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures" / "compliance.json"

SCRIPT = [
    {"channel": "nasal", "phase": "inhale", "duration_s": 4.0},
    {"channel": "oral", "phase": "exhale", "duration_s": 6.0},
] * 6


def decision_for(step):
    channel = "nose" if step["channel"] == "nasal" else "mouth"
    return f"{channel}-{step['phase']}"


def event(k, decision):
    if decision in ("pause", "uncertain"):
        scores, phase = [0.9, 0.05, 0.05], None
    elif decision.startswith("nose"):
        scores = [0.05, 0.9, 0.1]
        phase = [0.9, 0.1] if decision.endswith("inhale") else [0.1, 0.9]
    else:
        scores = [0.05, 0.1, 0.9]
        phase = [0.9, 0.1] if decision.endswith("inhale") else [0.1, 0.9]
    return BreathEvent(
        t_start=0.25 * k, decision=decision, channel_scores=scores, phase_scores=phase, latency_ms=8.0
    )


def build_streams():
    perfect = []
    k = 0
    for step in SCRIPT:
        for _ in range(int(step["duration_s"] / 0.25)):
            perfect.append(event(k, decision_for(step)))
            k += 1

    # imperfect: the user pauses through most of every 4th step
    imperfect = []
    k = 0
    for idx, step in enumerate(SCRIPT):
        n = int(step["duration_s"] / 0.25)
        for j in range(n):
            decision = "pause" if idx % 4 == 3 and j < n - 2 else decision_for(step)
            imperfect.append(event(k, decision))
            k += 1
    return perfect, imperfect


def score(events):
    smoother = DecisionSmoother()
    timeline = [(e.t_start, smoother.update(e.decision)) for e in events]
    steps = [ExerciseStep(s["channel"], s["phase"], s["duration_s"]) for s in SCRIPT]
    overall, fractions = compliance_score(timeline, steps)
    return overall, fractions


def main():
    perfect, imperfect = build_streams()
    perfect_overall, perfect_fractions = score(perfect)
    imperfect_overall, imperfect_fractions = score(imperfect)
    assert perfect_overall == 1.0, perfect_fractions
    fixture = {
        "script": SCRIPT,
        "perfect_events": [e.to_json() for e in perfect],
        "imperfect_events": [e.to_json() for e in imperfect],
        "server": {
            "perfect_compliance": perfect_overall,
            "perfect_fractions": perfect_fractions,
            "imperfect_compliance": imperfect_overall,
            "imperfect_fractions": imperfect_fractions,
        },
    }
    FIXTURE_PATH.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE_PATH.write_text(json.dumps(fixture, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {FIXTURE_PATH}")
    print(f"perfect compliance: {perfect_overall}")
    print(f"imperfect compliance: {imperfect_overall} fractions {imperfect_fractions}")


if __name__ == "__main__":
    main()
