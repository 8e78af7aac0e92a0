"""Spectral features: 128x126 mel-spectrograms and 40x41 MFCC matrices.

Both paths share one STFT (periodic Hann, reflect center padding). The mel
path uses n_fft 2048 / hop 64; the MFCC path uses n_fft 400 / hop 200 so a
500 ms segment lands exactly on 126 and 41 time frames.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BreathSenseError
from .labels import SEGMENT_SAMPLES, Segment

MEL = "mel"
MFCC = "mfcc"

N_MELS = 128
N_MFCC = 40
LOG_FLOOR = 1e-6
SAMPLE_RATE = 16000

FEATURE_SHAPES = {MEL: (128, 126), MFCC: (40, 41)}


class EmptyInput(BreathSenseError):
    pass


class CorruptFeatureFile(BreathSenseError):
    pass


@dataclass(frozen=True)
class StftConfig:
    n_fft: int
    win_length: int
    hop_length: int
    center: bool = True

    def __post_init__(self):
        if self.win_length > self.n_fft or self.hop_length < 1:
            raise ValueError(f"invalid STFT config {self}")


MEL_STFT = StftConfig(n_fft=2048, win_length=2048, hop_length=64)
MFCC_STFT = StftConfig(n_fft=400, win_length=400, hop_length=200)


@dataclass
class FeatureMatrix:
    kind: str  # MEL or MFCC
    values: np.ndarray  # (rows, cols) float32, rows = frequency/cepstral axis


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(samples, cfg: StftConfig) -> np.ndarray:
    """Windowed DFT columns; (n_fft//2+1, floor(len/hop)+1) with center padding."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("stft of empty signal")
    window = hann_periodic(cfg.win_length)
    if cfg.win_length < cfg.n_fft:
        pad = cfg.n_fft - cfg.win_length
        window = np.concatenate([np.zeros(pad // 2), window, np.zeros(pad - pad // 2)])
    if cfg.center:
        half = cfg.n_fft // 2
        if half > x.size - 1:
            raise EmptyInput(f"signal of {x.size} samples too short for n_fft {cfg.n_fft} centering")
        xp = np.pad(x, half, mode="reflect")
    else:
        xp = x
    n_frames = x.size // cfg.hop_length + 1 if cfg.center else (x.size - cfg.n_fft) // cfg.hop_length + 1
    frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.n_fft)[:: cfg.hop_length][:n_frames]
    return np.fft.rfft(frames * window, axis=1).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = 2048, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters on HTK mel-spaced centers, 0 Hz to Nyquist, no area norm."""
    bin_freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    pts = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, bin_freqs.size))
    for k in range(n_mels):
        left, center, right = pts[k], pts[k + 1], pts[k + 2]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
    return fb


_fb_cache: dict = {}


def _filterbank_cached(n_mels, n_fft, sample_rate=SAMPLE_RATE):
    key = (n_mels, n_fft, sample_rate)
    if key not in _fb_cache:
        _fb_cache[key] = mel_filterbank(n_mels, n_fft, sample_rate)
    return _fb_cache[key]


def mel_power(samples, cfg: StftConfig = MEL_STFT, n_mels: int = N_MELS) -> np.ndarray:
    """Raw mel power spectrogram (pre-log), any input length."""
    spec = np.abs(stft(samples, cfg)) ** 2
    return _filterbank_cached(n_mels, cfg.n_fft) @ spec


def mel_spectrogram(segment: Segment, log: bool = True) -> FeatureMatrix:
    if segment.samples.shape[0] != SEGMENT_SAMPLES:
        raise ValueError("mel_spectrogram expects a 500 ms segment")
    power = mel_power(segment.samples, MEL_STFT, N_MELS)
    values = np.log(power + LOG_FLOOR) if log else power
    return FeatureMatrix(kind=MEL, values=values.astype(np.float32))


def dct_ortho_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows = coefficients."""
    i = np.arange(n)
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * np.outer(i, 2 * i + 1) / (2.0 * n))
    mat[0] /= np.sqrt(2.0)
    return mat


_dct_cache: dict = {}


def mfcc(segment: Segment, n_mfcc: int = N_MFCC) -> FeatureMatrix:
    if segment.samples.shape[0] != SEGMENT_SAMPLES:
        raise ValueError("mfcc expects a 500 ms segment")
    logmel = np.log(mel_power(segment.samples, MFCC_STFT, N_MELS) + LOG_FLOOR)
    if N_MELS not in _dct_cache:
        _dct_cache[N_MELS] = dct_ortho_matrix(N_MELS)
    coeffs = _dct_cache[N_MELS][:n_mfcc] @ logmel
    return FeatureMatrix(kind=MFCC, values=coeffs.astype(np.float32))


def extract(segment: Segment, kind: str) -> FeatureMatrix:
    if kind == MEL:
        return mel_spectrogram(segment)
    if kind == MFCC:
        return mfcc(segment)
    raise ValueError(f"unknown feature kind {kind!r}")


def standardize(values: np.ndarray) -> np.ndarray:
    """Per-segment standardization applied before the CNN."""
    v = values.astype(np.float32)
    return (v - v.mean()) / (v.std() + 1e-8)


# --- BFM1 feature dump container -------------------------------------------

_KIND_BYTES = {MEL: 0, MFCC: 1}
_KIND_NAMES = {0: MEL, 1: MFCC}


def write_bfm(fm: FeatureMatrix) -> bytes:
    rows, cols = fm.values.shape
    header = b"BFM1" + struct.pack("<BII", _KIND_BYTES[fm.kind], rows, cols)
    return header + fm.values.astype("<f4").tobytes()


def read_bfm(data: bytes) -> FeatureMatrix:
    if len(data) < 13 or data[:4] != b"BFM1":
        raise CorruptFeatureFile("missing BFM1 magic")
    kind_byte, rows, cols = struct.unpack_from("<BII", data, 4)
    if kind_byte not in _KIND_NAMES:
        raise CorruptFeatureFile(f"unknown feature kind byte {kind_byte}")
    expected = 13 + rows * cols * 4
    if len(data) < expected:
        raise CorruptFeatureFile(f"payload truncated: {len(data)} < {expected} bytes")
    values = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=13).reshape(rows, cols)
    return FeatureMatrix(kind=_KIND_NAMES[kind_byte], values=values.copy())


def save_bfm(fm: FeatureMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_bfm(fm))


def load_bfm(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        return read_bfm(fh.read())
