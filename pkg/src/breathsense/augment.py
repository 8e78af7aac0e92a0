"""Noise augmentation at controlled SNR for training segments."""

from dataclasses import dataclass, replace

import numpy as np

from .errors import BreathSenseError
from .labels import SEGMENT_SAMPLES, Segment

SNR_LOW_DB = 20.0
SNR_HIGH_DB = 40.0

_REDRAW_LIMIT = 16


class SilentSignal(BreathSenseError):
    pass


class SilentNoiseSlice(BreathSenseError):
    pass


@dataclass
class NoiseBank:
    samples: np.ndarray  # long mono 16 kHz buffer
    rng_seed: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.shape[0] < SEGMENT_SAMPLES:
            raise ValueError(f"noise bank needs >= {SEGMENT_SAMPLES} samples")
        if not np.any(self.samples):
            raise ValueError("noise bank has zero power")


def sample_snr(rng: np.random.Generator, low_db: float = SNR_LOW_DB, high_db: float = SNR_HIGH_DB) -> float:
    """Uniform SNR draw in dB; degenerate ranges return the point value."""
    if low_db == high_db:
        return float(low_db)
    return float(rng.uniform(low_db, high_db))


def mix_noise(segment: Segment, bank: NoiseBank, snr_db: float, rng: np.random.Generator) -> Segment:
    """Add a random bank slice scaled so the mix hits the requested SNR exactly."""
    sig = segment.samples.astype(np.float64)
    p_signal = float(np.mean(sig**2))
    if p_signal == 0.0:
        raise SilentSignal("cannot define SNR for an all-zero segment")
    n = bank.samples.shape[0]
    for _ in range(_REDRAW_LIMIT):
        off = int(rng.integers(0, n - SEGMENT_SAMPLES + 1))
        noise = bank.samples[off : off + SEGMENT_SAMPLES].astype(np.float64)
        p_noise = float(np.mean(noise**2))
        if p_noise > 0.0:
            break
    else:
        raise SilentNoiseSlice(f"no nonsilent {SEGMENT_SAMPLES}-sample slice after {_REDRAW_LIMIT} draws")
    gain = np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = (sig + gain * noise).astype(np.float32)
    return replace(segment, samples=mixed)


def synth_babble(duration_s: float = 10.0, sample_rate: int = 16000, seed: int = 7, n_talkers: int = 6) -> np.ndarray:
    """Babble-like stand-in noise: amplitude-modulated band-passed noise voices."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    out = np.zeros(n, dtype=np.float64)
    for _ in range(n_talkers):
        spec = np.fft.rfft(rng.standard_normal(n))
        lo = rng.uniform(120.0, 300.0)
        hi = rng.uniform(1200.0, 3400.0)
        voiced = np.fft.irfft(np.where((freqs >= lo) & (freqs <= hi), spec, 0.0), n)
        # syllabic-rate envelope (~2-6 Hz)
        env_spec = np.fft.rfft(rng.standard_normal(n))
        env = np.fft.irfft(np.where(freqs <= rng.uniform(2.0, 6.0), env_spec, 0.0), n)
        env = np.abs(env) / (np.abs(env).max() + 1e-12)
        out += voiced * env
    out *= 0.25 / (np.abs(out).max() + 1e-12)
    return out.astype(np.float32)


def default_noise_bank(seed: int = 7) -> NoiseBank:
    return NoiseBank(samples=synth_babble(seed=seed), rng_seed=seed)
