"""Label-track text files, 500 ms segmentation, and multilabel ground truth."""

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .audio_io import CANONICAL_RATE, AudioClip
from .errors import BreathSenseError

SEGMENT_SAMPLES = 8000  # 500 ms at 16 kHz
STRIDE_SAMPLES = 4000  # 250 ms
N_CLASSES = 5

# Pre-annotation code emitted by the labeling assistant for "some breath,
# channel/phase pending human refinement".
BREATH_PLACEHOLDER = 9

OVERLAP_THRESHOLD_S = 0.010


class MalformedLine(BreathSenseError):
    pass


class NegativeDuration(BreathSenseError):
    pass


class UnknownClass(BreathSenseError):
    pass


class ClipTooShort(BreathSenseError):
    pass


class NoOverlap(BreathSenseError):
    pass


class BreathClass(IntEnum):
    PAUSE = 0
    NOSE_INHALE = 1
    NOSE_EXHALE = 2
    MOUTH_INHALE = 3
    MOUTH_EXHALE = 4

    @property
    def label(self) -> str:
        return _CLASS_NAMES[self.value]


_CLASS_NAMES = {0: "pause", 1: "nose-inhale", 2: "nose-exhale", 3: "mouth-inhale", 4: "mouth-exhale"}
_NAME_CODES = {name: code for code, name in _CLASS_NAMES.items()}


@dataclass(frozen=True)
class LabelInterval:
    start_s: float
    end_s: float
    code: int


@dataclass
class LabelTrack:
    intervals: list = field(default_factory=list)

    def __post_init__(self):
        for iv in self.intervals:
            if iv.start_s < 0 or iv.end_s <= iv.start_s:
                raise NegativeDuration(f"bad interval [{iv.start_s}, {iv.end_s}]")
        self.intervals = sorted(self.intervals, key=lambda iv: (iv.start_s, iv.end_s))

    def __eq__(self, other):
        return isinstance(other, LabelTrack) and self.intervals == other.intervals

    def __len__(self):
        return len(self.intervals)


@dataclass
class Segment:
    clip_id: str
    start_s: float
    samples: np.ndarray  # exactly 8000 float32 samples
    labels: np.ndarray = None  # (5,) binary vector once ground truth is attached

    def __post_init__(self):
        if self.samples.shape != (SEGMENT_SAMPLES,):
            raise ValueError(f"segment needs {SEGMENT_SAMPLES} samples, got {self.samples.shape}")


def _parse_code(token: str, allow_placeholder: bool) -> int:
    tok = token.strip()
    low = tok.lower()
    if low in _NAME_CODES:
        return _NAME_CODES[low]
    try:
        code = int(tok)
    except ValueError:
        raise MalformedLine(f"label token {token!r} is neither a code nor a class name")
    if code in _CLASS_NAMES or (allow_placeholder and code == BREATH_PLACEHOLDER):
        return code
    raise UnknownClass(f"class code {code} outside the 0..4 taxonomy")


def parse_labels(text: str, allow_placeholder: bool = False) -> LabelTrack:
    """Parse TAB-separated `start end label` lines as exported by Audacity."""
    intervals = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedLine(f"line {lineno}: expected 3 TAB-separated fields, got {len(parts)}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedLine(f"line {lineno}: non-numeric time field")
        if not (np.isfinite(start) and np.isfinite(end)):
            raise MalformedLine(f"line {lineno}: non-finite time field")
        code = _parse_code(parts[2], allow_placeholder)
        if start < 0 or end <= start:
            raise NegativeDuration(f"line {lineno}: interval [{start}, {end}] has no duration")
        intervals.append(LabelInterval(start, end, code))
    return LabelTrack(intervals)


def write_labels(track: LabelTrack) -> str:
    """Emit the bit-exact writer format: times with 6 decimals, LF endings."""
    return "".join(f"{iv.start_s:.6f}\t{iv.end_s:.6f}\t{iv.code}\n" for iv in track.intervals)


def segment_clip(clip: AudioClip) -> list:
    """Cut a canonical clip into 500 ms segments at a 250 ms stride."""
    if clip.sample_rate != CANONICAL_RATE or clip.channels != 1:
        raise ValueError("segment_clip expects a canonical 16 kHz mono clip")
    n = clip.samples.shape[0]
    if n < SEGMENT_SAMPLES:
        raise ClipTooShort(f"{clip.source_id}: {n / CANONICAL_RATE:.3f} s < 0.5 s")
    count = (n - SEGMENT_SAMPLES) // STRIDE_SAMPLES + 1
    segments = []
    for k in range(count):
        off = k * STRIDE_SAMPLES
        segments.append(
            Segment(
                clip_id=clip.source_id,
                start_s=off / CANONICAL_RATE,
                samples=clip.samples[off : off + SEGMENT_SAMPLES],
            )
        )
    return segments


def assign_labels(segment: Segment, track: LabelTrack, threshold_s: float = OVERLAP_THRESHOLD_S) -> Segment:
    """Multilabel assignment: every class overlapping the window by >= 10 ms is set."""
    window_end = segment.start_s + SEGMENT_SAMPLES / CANONICAL_RATE
    labels = np.zeros(N_CLASSES, dtype=np.uint8)
    for iv in track.intervals:
        if iv.code not in _CLASS_NAMES:
            continue
        overlap = min(iv.end_s, window_end) - max(iv.start_s, segment.start_s)
        if overlap >= threshold_s:
            labels[iv.code] = 1
    if not labels.any():
        raise NoOverlap(f"window at {segment.start_s:.2f} s has no labeled overlap >= {threshold_s} s")
    return replace(segment, labels=labels)
