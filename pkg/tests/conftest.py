import numpy as np
import pytest

from breathsense.audio_io import AudioClip, write_wav
from breathsense.labels import Segment


def make_tone(freq_hz, duration_s=1.0, rate=16000, amp=0.5):
    t = np.arange(int(round(duration_s * rate))) / rate
    return (amp * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32)


def band_noise(rng, lo_hz, hi_hz, n, rate=16000, amp=0.3):
    """White noise band-limited to [lo, hi] by FFT masking."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    x = np.fft.irfft(np.where((freqs >= lo_hz) & (freqs <= hi_hz), spec, 0.0), n)
    return (amp * x / (np.abs(x).max() + 1e-12)).astype(np.float32)


def make_segment(samples, labels=None, clip_id="test", start_s=0.0):
    seg = Segment(clip_id=clip_id, start_s=start_s, samples=np.asarray(samples, dtype=np.float32))
    if labels is not None:
        seg.labels = np.asarray(labels, dtype=np.uint8)
    return seg


# Class bands for the synthetic separable dataset: each breath class owns a
# disjoint frequency band so mel features are trivially separable.
CLASS_BANDS = {
    1: (300.0, 800.0),  # nose-inhale
    2: (900.0, 1700.0),  # nose-exhale
    3: (3000.0, 4200.0),  # mouth-inhale
    4: (4800.0, 6400.0),  # mouth-exhale
}


def synth_subject_clip(seed, seconds=30, rate=16000):
    """One subject's audio: repeating 1 s steps [pause,1,2,pause,3,4] + labels."""
    rng = np.random.default_rng(seed)
    pattern = [0, 1, 2, 0, 3, 4]
    samples = []
    label_lines = []
    for k in range(int(seconds)):
        code = pattern[k % len(pattern)]
        if code == 0:
            chunk = (1e-4 * rng.standard_normal(rate)).astype(np.float32)
        else:
            lo, hi = CLASS_BANDS[code]
            chunk = band_noise(rng, lo, hi, rate) + (1e-4 * rng.standard_normal(rate)).astype(np.float32)
        samples.append(chunk)
        label_lines.append(f"{k:.6f}\t{k + 1:.6f}\t{code}\n")
    return np.concatenate(samples), "".join(label_lines)


def write_dataset(tmp_path, subjects=("s1", "s2"), seconds=30):
    """WAV + label files + manifest for the synthetic subjects."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for i, subject in enumerate(subjects):
        audio, labels_text = synth_subject_clip(seed=100 + i, seconds=seconds)
        wav_path = tmp_path / f"{subject}.wav"
        lab_path = tmp_path / f"{subject}.txt"
        write_wav(AudioClip(samples=audio, sample_rate=16000, source_id=str(wav_path)), wav_path)
        lab_path.write_text(labels_text)
        manifest_rows.append(f"{wav_path}\t{subject}\tsess1\t{lab_path}\tmixed\n")
    manifest = tmp_path / "manifest.tsv"
    manifest.write_text("".join(manifest_rows))
    return manifest


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory):
    return write_dataset(tmp_path_factory.mktemp("dataset"))


@pytest.fixture(scope="session")
def synthetic_records(synthetic_manifest):
    from breathsense.training import build_records, load_manifest

    return build_records(load_manifest(synthetic_manifest))


@pytest.fixture(scope="session")
def smoke_models(synthetic_records, tmp_path_factory):
    """Briefly trained channel+phase models, good enough for cascade tests."""
    from breathsense.training import (
        CHANNEL,
        PHASE,
        LoadedModel,
        ModelSpec,
        TrainConfig,
        build_model,
        records_for_role,
        save_model_file,
        train,
    )

    out_dir = tmp_path_factory.mktemp("models")
    cfg = TrainConfig(max_epochs=6, patience=6, seed=1, augment=False)
    models = {}
    for role in (CHANNEL, PHASE):
        recs = records_for_role(synthetic_records, role)
        train_recs = [r for r in recs if r.subject == "s1"]
        val_recs = [r for r in recs if r.subject == "s2"]
        net = build_model(ModelSpec(role=role), seed=1)
        net, info = train(net, train_recs, val_recs, cfg, role)
        lm = LoadedModel(network=net, spec=ModelSpec(role=role))
        path = out_dir / f"{role}.brw"
        save_model_file(lm, path)
        models[role] = (lm, path, info)
    return models
