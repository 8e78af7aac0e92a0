import json

import numpy as np
import pytest

from breathsense.audio_io import AudioClip, write_wav
from breathsense.cli import main
from breathsense.features import load_bfm

from conftest import band_noise, write_dataset


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestUsage:
    def test_no_command_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_unknown_flag_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["infer", "--bogus"])
        assert exc.value.code == 1

    def test_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["loocv", "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--features", "--patience", "--batch", "--lr", "--seed", "--manifest", "--out", "--threshold"):
            assert flag in out
        assert "30" in out  # patience default echoed in help

    def test_top_level_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("preprocess", "train", "loocv", "infer", "monitor", "spectrogram", "label-assist"):
            assert cmd in out


class TestPreprocess:
    def test_feature_dumps_and_counts(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path / "data", subjects=("p1",), seconds=12)
        out_dir = tmp_path / "out"
        code, out, err = run_cli(capsys, "preprocess", "--manifest", str(manifest), "--out", str(out_dir))
        assert code == 0
        dumps = sorted(out_dir.glob("*.bfm"))
        assert len(dumps) == 47  # floor((12 - 0.5) / 0.25) + 1
        fm = load_bfm(dumps[0])
        assert fm.values.shape == (128, 126)
        assert "class 0:" in out
        labels_file = out_dir / "p1.labels.tsv"
        assert labels_file.exists()
        assert len(labels_file.read_text().splitlines()) == 47

    def test_empty_manifest_is_data_error(self, tmp_path, capsys):
        manifest = tmp_path / "m.tsv"
        manifest.write_text("")
        code, out, err = run_cli(capsys, "preprocess", "--manifest", str(manifest), "--out", str(tmp_path / "o"))
        assert code == 2
        assert "empty manifest" in err

    def test_missing_clip_partial_failure(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path / "data", subjects=("p1",), seconds=8)
        bad = f"{tmp_path}/missing.wav\tpx\tsess\t{tmp_path}/missing.txt\t\n"
        manifest.write_text(manifest.read_text() + bad)
        code, out, err = run_cli(capsys, "preprocess", "--manifest", str(manifest), "--out", str(tmp_path / "o"))
        assert code == 2
        assert "skipping" in err
        assert len(list((tmp_path / "o").glob("*.bfm"))) > 0  # good clip still processed


class TestInfer:
    def test_ten_second_clip_yields_39_events(self, tmp_path, capsys, smoke_models):
        _, ch_path, _ = smoke_models["channel"]
        _, ph_path, _ = smoke_models["phase"]
        rng = np.random.default_rng(0)
        wav = tmp_path / "ten.wav"
        write_wav(AudioClip(samples=band_noise(rng, 300, 800, 160000), sample_rate=16000), wav)
        code, out, err = run_cli(
            capsys, "infer", str(wav), "--channel-weights", str(ch_path), "--phase-weights", str(ph_path)
        )
        assert code == 0
        lines = out.strip().splitlines()
        events = [json.loads(l) for l in lines[:-1]]
        metrics = json.loads(lines[-1])
        assert len(events) == 39
        assert events[0]["t"] == 0.0
        assert metrics["total_events"] == 39

    def test_silent_clip_all_pause_zero_breaths(self, tmp_path, capsys, smoke_models):
        _, ch_path, _ = smoke_models["channel"]
        _, ph_path, _ = smoke_models["phase"]
        rng = np.random.default_rng(1)
        wav = tmp_path / "quiet.wav"
        write_wav(
            AudioClip(samples=(1e-4 * rng.standard_normal(48000)).astype(np.float32), sample_rate=16000), wav
        )
        code, out, err = run_cli(
            capsys, "infer", str(wav), "--channel-weights", str(ch_path), "--phase-weights", str(ph_path)
        )
        assert code == 0
        lines = out.strip().splitlines()
        events = [json.loads(l) for l in lines[:-1]]
        metrics = json.loads(lines[-1])
        assert all(e["decision"] == "pause" for e in events)
        assert metrics["total_breaths"] == 0

    def test_missing_weights_clean_error(self, tmp_path, capsys):
        wav = tmp_path / "x.wav"
        write_wav(AudioClip(samples=np.zeros(16000, dtype=np.float32), sample_rate=16000), wav)
        code, out, err = run_cli(
            capsys, "infer", str(wav), "--channel-weights", "/nonexistent.brw", "--phase-weights", "/no.brw"
        )
        assert code == 2
        assert "error" in err


class TestSpectrogram:
    def test_png_dimensions(self, tmp_path, capsys):
        from PIL import Image

        rng = np.random.default_rng(2)
        wav = tmp_path / "clip.wav"
        n = 16000 * 4
        write_wav(AudioClip(samples=band_noise(rng, 500, 2000, n), sample_rate=16000), wav)
        out_png = tmp_path / "spec.png"
        code, out, err = run_cli(capsys, "spectrogram", str(wav), "--out", str(out_png))
        assert code == 0
        img = Image.open(out_png)
        assert img.height == 128
        assert img.width >= n // 64  # >= frame count

    def test_silent_clip_uniform_image(self, tmp_path, capsys):
        from PIL import Image

        wav = tmp_path / "silent.wav"
        write_wav(AudioClip(samples=np.zeros(32000, dtype=np.float32), sample_rate=16000), wav)
        out_png = tmp_path / "spec.png"
        code, _, _ = run_cli(capsys, "spectrogram", str(wav), "--out", str(out_png))
        assert code == 0
        arr = np.asarray(Image.open(out_png))
        assert arr.min() == arr.max()

    def test_label_overlay_draws_boundaries(self, tmp_path, capsys):
        from PIL import Image

        rng = np.random.default_rng(3)
        wav = tmp_path / "clip.wav"
        write_wav(AudioClip(samples=(0.2 * rng.standard_normal(32000)).astype(np.float32), sample_rate=16000), wav)
        labels = tmp_path / "labs.txt"
        labels.write_text("0.000000\t1.000000\t0\n1.000000\t2.000000\t1\n")
        out_png = tmp_path / "spec.png"
        code, _, _ = run_cli(capsys, "spectrogram", str(wav), "--out", str(out_png), "--labels", str(labels))
        assert code == 0
        arr = np.asarray(Image.open(out_png))
        boundary_col = int(round(1.0 * 16000 / 64))
        assert (arr[:, boundary_col] == 255).all()


class TestTrainAndLoocv:
    def test_train_writes_weights_and_echoes_config(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path / "d", subjects=("a", "b"), seconds=10)
        out_dir = tmp_path / "m"
        code, out, err = run_cli(
            capsys,
            "train",
            "--manifest", str(manifest),
            "--out", str(out_dir),
            "--role", "channel",
            "--features", "mfcc",
            "--epochs", "2",
            "--patience", "30",
            "--batch", "16",
        )
        assert code == 0
        assert "patience=30" in out
        assert (out_dir / "channel_mfcc.brw").exists()

    def test_loocv_writes_fold_weights_and_summary(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path / "d", subjects=("a", "b"), seconds=10)
        out_dir = tmp_path / "m"
        code, out, err = run_cli(
            capsys,
            "loocv",
            "--manifest", str(manifest),
            "--out", str(out_dir),
            "--role", "channel",
            "--features", "mfcc",
            "--epochs", "2",
            "--batch", "16",
        )
        assert code == 0
        assert (out_dir / "fold_a_channel_mfcc.brw").exists()
        assert (out_dir / "fold_b_channel_mfcc.brw").exists()
        summary = json.loads((out_dir / "loocv_channel_mfcc.json").read_text())
        assert set(summary["folds"]) == {"a", "b"}
        assert "Avg (SD)" in out

    def test_loocv_single_subject_insufficient(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path / "d", subjects=("solo",), seconds=8)
        code, out, err = run_cli(
            capsys, "loocv", "--manifest", str(manifest), "--out", str(tmp_path / "m"), "--features", "mfcc"
        )
        assert code == 2
        assert "2 subjects" in err


class TestLabelAssistCmd:
    def test_writes_alternating_label_file(self, tmp_path, capsys, synthetic_records):
        from breathsense.training import (
            LABELING,
            LoadedModel,
            ModelSpec,
            TrainConfig,
            build_model,
            records_for_role,
            save_model_file,
            train,
        )

        recs = records_for_role(synthetic_records, LABELING)
        tr = [r for r in recs if r.subject == "s1"]
        va = [r for r in recs if r.subject == "s2"]
        spec = ModelSpec(role=LABELING, feature_kind="mfcc")
        net = build_model(spec, seed=5)
        cfg = TrainConfig(batch_size=16, max_epochs=3, patience=3, feature_kind="mfcc", seed=5)
        net, info = train(net, tr, va, cfg, LABELING)
        weights = tmp_path / "labeling.brw"
        save_model_file(LoadedModel(network=net, spec=spec), weights)

        rng = np.random.default_rng(4)
        chunks = []
        for k in range(4):
            if k % 2 == 0:
                chunks.append((1e-4 * rng.standard_normal(32000)).astype(np.float32))
            else:
                chunks.append(band_noise(rng, 300, 800, 32000))
        wav = tmp_path / "alt.wav"
        write_wav(AudioClip(samples=np.concatenate(chunks), sample_rate=16000), wav)
        out_path = tmp_path / "assist.txt"
        code, out, err = run_cli(
            capsys, "label-assist", str(wav), "--weights", str(weights), "--out", str(out_path)
        )
        assert code == 0
        text = out_path.read_text()
        codes = [line.split("\t")[2] for line in text.strip().splitlines()]
        assert set(codes) == {"0", "9"}

    def test_unwritable_output_clean_error(self, tmp_path, capsys, smoke_models):
        # wrong-role weights also covered: channel weights are rejected cleanly
        _, ch_path, _ = smoke_models["channel"]
        wav = tmp_path / "x.wav"
        write_wav(AudioClip(samples=np.zeros(16000, dtype=np.float32), sample_rate=16000), wav)
        code, out, err = run_cli(
            capsys, "label-assist", str(wav), "--weights", str(ch_path), "--out", str(tmp_path / "o.txt")
        )
        assert code == 2
        assert "labeling" in err

    def test_too_short_clip_surfaced(self, tmp_path, capsys, synthetic_records):
        wav = tmp_path / "short.wav"
        write_wav(AudioClip(samples=np.zeros(4000, dtype=np.float32), sample_rate=16000), wav)
        fake = tmp_path / "missing.brw"
        code, out, err = run_cli(capsys, "label-assist", str(wav), "--weights", str(fake), "--out", str(tmp_path / "o"))
        assert code == 2
