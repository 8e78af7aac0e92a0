"""WAV decoding, downmix and resampling into canonical 16 kHz mono float."""

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import BreathSenseError
from .kernels import polyphase_resample

CANONICAL_RATE = 16000

TAPS_PER_PHASE = 64
KAISER_BETA = 8.0


class UnsupportedEncoding(BreathSenseError):
    pass


class CorruptHeader(BreathSenseError):
    pass


class EmptyAudio(BreathSenseError):
    pass


@dataclass
class AudioClip:
    """Decoded audio. Multi-channel data is interleaved; mono after canonicalize."""

    samples: np.ndarray  # float32 in [-1, 1], interleaved if channels > 1
    sample_rate: int
    channels: int = 1
    source_id: str = ""

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.channels / self.sample_rate

    def frame_count(self) -> int:
        return self.samples.shape[0] // self.channels


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (PCM16/24/32 or float32) as a normalized AudioClip."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF":
        if len(data) >= 12 and data[4:8] == b"ftyp":
            raise UnsupportedEncoding(f"{path}: MP4/M4A container, convert to WAV first")
        raise CorruptHeader(f"{path}: missing RIFF magic")
    if data[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: RIFF file is not WAVE")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if body + 16 > len(data):
                raise CorruptHeader(f"{path}: truncated fmt chunk")
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == 0xFFFE:  # WAVE_FORMAT_EXTENSIBLE: real tag leads the GUID
                if size < 40 or body + 26 > len(data):
                    raise CorruptHeader(f"{path}: truncated extensible fmt chunk")
                (tag,) = struct.unpack_from("<H", data, body + 24)
            fmt = (tag, channels, rate, bits)
        elif cid == b"data":
            if body + size > len(data):
                raise CorruptHeader(f"{path}: data chunk larger than file")
            payload = data[body : body + size]
        pos = body + size + (size & 1)

    if fmt is None:
        raise CorruptHeader(f"{path}: no fmt chunk")
    if payload is None:
        raise CorruptHeader(f"{path}: no data chunk")
    tag, channels, rate, bits = fmt
    if channels < 1 or rate <= 0:
        raise CorruptHeader(f"{path}: invalid fmt fields (channels={channels}, rate={rate})")

    if tag == 1 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
        samples = raw.astype(np.float32) / 32768.0
    elif tag == 1 and bits == 24:
        raw = np.frombuffer(payload[: len(payload) // 3 * 3], dtype=np.uint8).reshape(-1, 3)
        vals = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        samples = vals.astype(np.float32) / float(1 << 23)
    elif tag == 1 and bits == 32:
        raw = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<i4")
        samples = raw.astype(np.float32) / float(1 << 31)
    elif tag == 3 and bits == 32:
        samples = np.clip(np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4"), -1.0, 1.0)
        samples = samples.astype(np.float32)
    elif tag in (1, 3):
        raise UnsupportedEncoding(f"{path}: unsupported bit depth {bits} for format tag {tag}")
    else:
        raise UnsupportedEncoding(f"{path}: compressed WAV (format tag 0x{tag:04x})")

    if samples.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    samples = samples[: samples.size // channels * channels]
    return AudioClip(samples=samples, sample_rate=int(rate), channels=int(channels), source_id=str(path))


def write_wav(clip: AudioClip, path) -> None:
    """Write PCM16 little-endian WAV."""
    pcm = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    block = 2 * clip.channels
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, clip.channels, clip.sample_rate, clip.sample_rate * block, block, 16
    )
    header += b"data" + struct.pack("<I", len(body))
    with open(path, "wb") as fh:
        fh.write(header + body)


def downmix_mono(clip: AudioClip) -> AudioClip:
    """Average interleaved channels per frame; mono input passes through."""
    if clip.channels == 1:
        return clip
    frames = clip.samples.reshape(-1, clip.channels)
    mono = frames.mean(axis=1).astype(np.float32)
    return replace(clip, samples=mono, channels=1)


def _design_phase_filters(up: int, down: int):
    """Kaiser windowed-sinc prototype split into `up` phases of 64 taps.

    The sinc is anchored on the integer tap n_taps//2 (Kaiser window sampled
    continuously around it) so the polyphase structure has zero net delay.
    """
    n_taps = TAPS_PER_PHASE * up
    cutoff = min(1.0 / up, 1.0 / down) / 2.0  # cycles per upsampled sample
    t = np.arange(n_taps, dtype=np.float64) - n_taps / 2.0
    frac = np.clip(1.0 - (t / (n_taps / 2.0)) ** 2, 0.0, None)
    window = np.i0(KAISER_BETA * np.sqrt(frac)) / np.i0(KAISER_BETA)
    proto = 2.0 * cutoff * np.sinc(2.0 * cutoff * t) * window
    proto *= up / proto.sum()
    return np.ascontiguousarray(proto.reshape(TAPS_PER_PHASE, up).T)


_filter_cache: dict = {}


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resample of a mono clip; identity when rates match."""
    if clip.channels != 1:
        raise ValueError("resample expects a mono clip; downmix first")
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if clip.sample_rate == target_rate:
        return clip
    g = np.gcd(clip.sample_rate, target_rate)
    up = target_rate // g
    down = clip.sample_rate // g
    if (up, down) not in _filter_cache:
        _filter_cache[(up, down)] = _design_phase_filters(up, down)
    filters = _filter_cache[(up, down)]
    center = filters.size // 2
    out = polyphase_resample(clip.samples.astype(np.float64), filters, up, down, center)
    return replace(clip, samples=out.astype(np.float32), sample_rate=int(target_rate))


def canonicalize(clip: AudioClip) -> AudioClip:
    """Downmix to mono and resample to the canonical 16 kHz."""
    return resample(downmix_mono(clip), CANONICAL_RATE)
