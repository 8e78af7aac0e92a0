"""breathsense: breathing channel/phase detection from earphone audio."""

__version__ = "0.1.0"

from .audio_io import AudioClip, canonicalize, downmix_mono, read_wav, resample, write_wav
from .errors import BreathSenseError
from .labels import BreathClass, LabelTrack, Segment, assign_labels, parse_labels, segment_clip, write_labels
from .features import FeatureMatrix, mel_spectrogram, mfcc, stft

__all__ = [
    "AudioClip",
    "BreathClass",
    "BreathSenseError",
    "FeatureMatrix",
    "LabelTrack",
    "Segment",
    "assign_labels",
    "canonicalize",
    "downmix_mono",
    "mel_spectrogram",
    "mfcc",
    "parse_labels",
    "read_wav",
    "resample",
    "segment_clip",
    "stft",
    "write_labels",
    "write_wav",
]
