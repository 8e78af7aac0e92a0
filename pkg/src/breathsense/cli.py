"""breathsense command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import features as feat
from .audio_io import canonicalize, read_wav
from .augment import default_noise_bank, NoiseBank
from .errors import BreathSenseError
from .labels import NoOverlap, assign_labels, parse_labels, segment_clip, write_labels
from .stream import BreathMonitor, classify_segment, event_line, metrics_line
from .training import (
    CHANNEL,
    LABELING,
    PHASE,
    LoadedModel,
    ModelSpec,
    TrainConfig,
    build_model,
    build_records,
    format_summary_table,
    label_assist,
    load_manifest,
    load_model_file,
    records_for_role,
    run_loocv,
    save_model_file,
    summarize_folds,
    train,
)

log = logging.getLogger("breathsense.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="breathsense", description="Breathing channel/phase detection toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common_train_flags(sp):
        sp.add_argument("--manifest", required=True, help="dataset manifest (TSV)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--role", choices=[CHANNEL, PHASE, LABELING], default=CHANNEL)
        sp.add_argument("--features", choices=[feat.MEL, feat.MFCC], default=feat.MEL)
        sp.add_argument("--batch", type=int, default=32, help="minibatch size (default 32)")
        sp.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
        sp.add_argument("--patience", type=int, default=30, help="early-stop patience in epochs (default 30)")
        sp.add_argument("--epochs", type=int, default=500, help="epoch budget (default 500)")
        sp.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
        sp.add_argument("--threshold", type=float, default=0.5, help="decision threshold (default 0.5)")
        sp.add_argument("--augment", action="store_true", help="noise-augment training folds")
        sp.add_argument("--noise", help="noise bank WAV (default: synthetic babble)")

    sp = sub.add_parser("preprocess", help="dump per-segment features and labels")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--features", choices=[feat.MEL, feat.MFCC], default=feat.MEL)

    sp = sub.add_parser("train", help="train one classifier with a held-out subject")
    add_common_train_flags(sp)
    sp.add_argument("--val-subject", help="subject held out for validation (default: last)")

    sp = sub.add_parser("loocv", help="leave-one-out cross-validation")
    add_common_train_flags(sp)

    sp = sub.add_parser("infer", help="batch inference over a WAV file")
    sp.add_argument("wav")
    sp.add_argument("--channel-weights", required=True)
    sp.add_argument("--phase-weights", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)

    sp = sub.add_parser("monitor", help="live monitoring of a replayed WAV source")
    sp.add_argument("source", help="WAV file replayed at wall-clock rate")
    sp.add_argument("--channel-weights", required=True)
    sp.add_argument("--phase-weights", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--serve", type=int, metavar="PORT", help="expose HTTP+WebSocket service")
    sp.add_argument("--log-dir", default="sessions", help="session JSONL directory")
    sp.add_argument("--speed", type=float, default=1.0, help="replay speed multiplier (1.0 = real time)")
    sp.add_argument("--script", help="exercise script JSON for compliance scoring")

    sp = sub.add_parser("spectrogram", help="render a log-mel spectrogram PNG")
    sp.add_argument("wav")
    sp.add_argument("--out", required=True)
    sp.add_argument("--labels", help="overlay label-track boundaries")

    sp = sub.add_parser("label-assist", help="pre-annotate pause/breath intervals")
    sp.add_argument("wav")
    sp.add_argument("--weights", required=True, help="trained labeling model")
    sp.add_argument("--out", required=True, help="output label-track path")

    return p


def _load_noise(args) -> NoiseBank:
    if getattr(args, "noise", None):
        clip = canonicalize(read_wav(args.noise))
        return NoiseBank(samples=clip.samples)
    return default_noise_bank()


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        patience=args.patience,
        max_epochs=args.epochs,
        seed=args.seed,
        augment=args.augment,
        feature_kind=args.features,
        threshold=args.threshold,
    )


def cmd_preprocess(args) -> int:
    rows = load_manifest(args.manifest)
    if not rows:
        raise BreathSenseError(f"{args.manifest}: empty manifest")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_counts = Counter()
    failures = 0
    for row in rows:
        try:
            clip = canonicalize(read_wav(row.clip_path))
            with open(row.label_path, "r", encoding="utf-8") as fh:
                track = parse_labels(fh.read())
        except (OSError, BreathSenseError) as exc:
            print(f"warning: skipping {row.clip_path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        stem = Path(row.clip_path).stem
        label_lines = []
        for i, seg in enumerate(segment_clip(clip)):
            try:
                labeled = assign_labels(seg, track)
            except NoOverlap:
                class_counts["unlabeled"] += 1
                continue
            fm = feat.extract(labeled, args.features)
            feat.save_bfm(fm, out_dir / f"{stem}_{i:05d}.bfm")
            bits = "".join(str(int(b)) for b in labeled.labels)
            label_lines.append(f"{i:05d}\t{seg.start_s:.6f}\t{bits}\n")
            for code, bit in enumerate(labeled.labels):
                if bit:
                    class_counts[code] += 1
        (out_dir / f"{stem}.labels.tsv").write_text("".join(label_lines), encoding="utf-8")
    for code in range(5):
        print(f"class {code}: {class_counts[code]} segments")
    if class_counts["unlabeled"]:
        print(f"unlabeled (excluded): {class_counts['unlabeled']} segments")
    return EXIT_DATA if failures else EXIT_OK


def cmd_train(args) -> int:
    records = build_records(load_manifest(args.manifest))
    records = records_for_role(records, args.role)
    subjects = sorted({r.subject for r in records})
    if len(subjects) < 2:
        raise BreathSenseError(f"need >= 2 subjects for train/validation split, got {len(subjects)}")
    val_subject = args.val_subject or subjects[-1]
    if val_subject not in subjects:
        raise BreathSenseError(f"validation subject {val_subject!r} not in manifest")
    cfg = _train_config(args)
    print(f"config: role={args.role} features={args.features} patience={cfg.patience} "
          f"batch={cfg.batch_size} lr={cfg.learning_rate} seed={cfg.seed} augment={cfg.augment}")
    spec = ModelSpec(role=args.role, feature_kind=args.features)
    model = build_model(spec, seed=cfg.seed)
    bank = _load_noise(args) if cfg.augment else None
    tr = [r for r in records if r.subject != val_subject]
    va = [r for r in records if r.subject == val_subject]
    model, info = train(model, tr, va, cfg, args.role, noise_bank=bank)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{args.role}_{args.features}.brw"
    save_model_file(LoadedModel(network=model, spec=spec), path)
    print(f"best epoch {info['best_epoch']}: validation macro F1 {info['best_f1']:.4f}")
    print(f"weights written to {path}")
    return EXIT_OK


def cmd_loocv(args) -> int:
    records = build_records(load_manifest(args.manifest))
    cfg = _train_config(args)
    spec = ModelSpec(role=args.role, feature_kind=args.features)
    bank = _load_noise(args) if cfg.augment else None
    reports, models = run_loocv(records, spec, cfg, noise_bank=bank)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rep, lm in zip(reports, models):
        path = out_dir / f"fold_{rep.held_out_subject}_{args.role}_{args.features}.brw"
        save_model_file(lm, path)
    summary = summarize_folds(reports)
    kind_name = "mel-spectrogram" if args.features == feat.MEL else "MFCC"
    print(format_summary_table([(args.role, kind_name, summary)]))
    for rep in reports:
        print(f"fold {rep.held_out_subject}: F1 {100 * rep.f1:.2f} (best epoch {rep.best_epoch})")
    with open(out_dir / f"loocv_{args.role}_{args.features}.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return EXIT_OK


def cmd_infer(args) -> int:
    channel = load_model_file(args.channel_weights)
    phase = load_model_file(args.phase_weights)
    clip = canonicalize(read_wav(args.wav))
    monitor = BreathMonitor(channel, phase, threshold=args.threshold)
    for event in monitor.push_samples(clip.samples):
        print(event_line(event))
    print(metrics_line(monitor.metrics()))
    return EXIT_OK


def cmd_monitor(args) -> int:
    from .service import ServiceRunner, SessionHub, load_script_file

    channel = load_model_file(args.channel_weights)
    phase = load_model_file(args.phase_weights)
    script = load_script_file(args.script) if args.script else None
    clip = canonicalize(read_wav(args.source))
    hub = SessionHub(args.log_dir, models_loaded=True)
    runner = None
    if args.serve:
        runner = ServiceRunner(hub, args.serve)
        runner.start()
        print(f"serving on port {args.serve}")
    monitor = BreathMonitor(channel, phase, threshold=args.threshold, max_backlog=8)
    # absorb kernel JIT warm-up before the wall clock starts
    classify_segment(np.zeros(8000, dtype=np.float32), channel, phase, args.threshold)
    session_id = hub.start_session(script)
    print(f"session {session_id}")
    chunk = 4000  # 250 ms feed granularity
    t_wall = time.monotonic()
    try:
        for off in range(0, clip.samples.shape[0], chunk):
            deadline = t_wall + (off + chunk) / 16000.0 / args.speed
            for event in monitor.push_samples(clip.samples[off : off + chunk]):
                hub.publish(event)
            delay = deadline - time.monotonic()
            if delay > 0:
                time.sleep(delay)
    except KeyboardInterrupt:
        print("interrupted, flushing session log", file=sys.stderr)
    finally:
        _, metrics = hub.stop_session()
        print(metrics_line(metrics))
        if monitor.drop_count:
            print(f"dropped segments: {monitor.drop_count}", file=sys.stderr)
        if runner is not None:
            runner.stop()
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    from PIL import Image, ImageDraw

    clip = canonicalize(read_wav(args.wav))
    power = feat.mel_power(clip.samples.astype(np.float64))
    img_vals = np.log(power + feat.LOG_FLOOR)
    lo, hi = img_vals.min(), img_vals.max()
    scale = (img_vals - lo) / (hi - lo) if hi > lo else np.zeros_like(img_vals)
    gray = (255 * scale).astype(np.uint8)[::-1, :]  # low mel rows at the bottom
    image = Image.fromarray(gray, mode="L")
    if args.labels:
        with open(args.labels, "r", encoding="utf-8") as fh:
            track = parse_labels(fh.read(), allow_placeholder=True)
        draw = ImageDraw.Draw(image)
        cols_per_s = 16000 / feat.MEL_STFT.hop_length
        for iv in track.intervals:
            for t in (iv.start_s, iv.end_s):
                x = int(round(t * cols_per_s))
                if 0 <= x < image.width:
                    draw.line([(x, 0), (x, image.height - 1)], fill=255)
    image.save(args.out, format="PNG")
    print(f"wrote {image.width}x{image.height} PNG to {args.out}")
    return EXIT_OK


def cmd_label_assist(args) -> int:
    lm = load_model_file(args.weights)
    if lm.spec.role != LABELING:
        raise BreathSenseError(f"{args.weights}: expected a labeling model, got role {lm.spec.role}")
    clip = read_wav(args.wav)
    track = label_assist(clip, lm)
    out = Path(args.out)
    try:
        out.write_text(write_labels(track), encoding="utf-8")
    except OSError as exc:
        raise BreathSenseError(f"cannot write {out}: {exc}")
    print(f"wrote {len(track.intervals)} intervals to {out}")
    return EXIT_OK


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "loocv": cmd_loocv,
    "infer": cmd_infer,
    "monitor": cmd_monitor,
    "spectrogram": cmd_spectrogram,
    "label-assist": cmd_label_assist,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BREATHSENSE_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BreathSenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("unhandled failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
