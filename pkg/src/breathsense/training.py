"""Classifier architectures, training with early stopping, F1 metrics, LOOCV."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import features as feat
from .audio_io import canonicalize, read_wav
from .augment import NoiseBank, mix_noise, sample_snr
from .errors import BreathSenseError
from .labels import (
    BREATH_PLACEHOLDER,
    LabelInterval,
    LabelTrack,
    NoOverlap,
    Segment,
    assign_labels,
    parse_labels,
    segment_clip,
)
from .nn import Adam, Network, bce_grad_logits, bce_loss, load_weights, save_weights
from .nn.layers import BatchNorm2D, Conv2D, Dense, Flatten, MaxPool2D, ReLU, Sigmoid

log = logging.getLogger("breathsense.training")

CHANNEL = "channel"
PHASE = "phase"
LABELING = "labeling"

_ROLE_CODES = {CHANNEL: 0, PHASE: 1, LABELING: 2}
_ROLE_NAMES = {v: k for k, v in _ROLE_CODES.items()}
_KIND_CODES = {feat.MEL: 0, feat.MFCC: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

ROLE_CLASSES = {
    CHANNEL: ["pause", "nasal", "oral"],
    PHASE: ["inhale", "exhale"],
    LABELING: ["pause", "breath"],
}


class EmptyDataset(BreathSenseError):
    pass


class InsufficientSubjects(BreathSenseError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    role: str  # CHANNEL | PHASE | LABELING
    feature_kind: str = feat.MEL
    conv_filters: tuple = None
    dense_widths: tuple = (256, 128, 64)

    def __post_init__(self):
        if self.role not in _ROLE_CODES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.feature_kind not in _KIND_CODES:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if self.conv_filters is None:
            filters = (4,) if self.role == PHASE else (8, 16, 32)
            object.__setattr__(self, "conv_filters", filters)

    @property
    def out_classes(self) -> int:
        return 3 if self.role == CHANNEL else 2

    @property
    def input_shape(self) -> tuple:
        return feat.FEATURE_SHAPES[self.feature_kind]

    @property
    def class_names(self) -> list:
        return ROLE_CLASSES[self.role]


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 30
    max_epochs: int = 500
    seed: int = 0
    augment: bool = False
    feature_kind: str = feat.MEL
    threshold: float = 0.5
    snr_range: tuple = (20.0, 40.0)


@dataclass
class FoldReport:
    held_out_subject: str
    f1: float
    per_class_f1: list
    confusion: np.ndarray  # per class: [TP, FP, FN, TN]
    best_epoch: int
    micro_f1: float = 0.0


@dataclass
class F1Report:
    macro: float
    micro: float
    per_class: list
    confusion: np.ndarray
    empty_classes: list = field(default_factory=list)


@dataclass
class LoadedModel:
    network: Network
    spec: ModelSpec


def build_model(spec: ModelSpec, seed: int = 0, input_shape: tuple = None) -> Network:
    """Layer graph: conv blocks (Conv3x3-BN-ReLU-Pool), flatten, 4 dense layers.

    input_shape overrides the feature-kind default (used by shrunk test builds).
    """
    rng = np.random.default_rng(seed)
    h, w = input_shape or spec.input_shape
    layers = []
    in_ch = 1
    for n_filters in spec.conv_filters:
        layers += [Conv2D(in_ch, n_filters, rng=rng), BatchNorm2D(n_filters), ReLU(), MaxPool2D()]
        in_ch = n_filters
        h, w = h // 2, w // 2
    layers.append(Flatten())
    width = in_ch * h * w
    for out_width in spec.dense_widths:
        layers += [Dense(width, out_width, rng=rng), ReLU()]
        width = out_width
    layers += [Dense(width, spec.out_classes, rng=rng), Sigmoid()]
    return Network(layers)


def save_model(lm: LoadedModel) -> bytes:
    meta = {
        "role": np.array([_ROLE_CODES[lm.spec.role]], dtype=np.float32),
        "feature_kind": np.array([_KIND_CODES[lm.spec.feature_kind]], dtype=np.float32),
    }
    return save_weights(lm.network, meta=meta)


def load_model(data: bytes) -> LoadedModel:
    network, meta = load_weights(data)
    spec = ModelSpec(
        role=_ROLE_NAMES[int(meta["role"][0])],
        feature_kind=_KIND_NAMES[int(meta["feature_kind"][0])],
    )
    return LoadedModel(network=network, spec=spec)


def load_model_file(path) -> LoadedModel:
    with open(path, "rb") as fh:
        return load_model(fh.read())


def save_model_file(lm: LoadedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(lm))


# --- metrics ----------------------------------------------------------------

def f1_score(predictions, targets, empty_class: str = "one") -> F1Report:
    """Per-class and macro F1 on binary matrices (threshold already applied).

    Classes absent from both predictions and targets score 1 by convention
    (and are flagged); pass empty_class="exclude" to drop them from the macro.
    """
    pred = np.asarray(predictions).astype(bool)
    tgt = np.asarray(targets).astype(bool)
    if pred.shape != tgt.shape:
        from .nn import ShapeMismatch

        raise ShapeMismatch(f"predictions {pred.shape} vs targets {tgt.shape}")
    if pred.ndim == 1:
        pred, tgt = pred[:, None], tgt[:, None]
    n_classes = pred.shape[1]
    confusion = np.zeros((n_classes, 4), dtype=np.int64)
    per_class = []
    empty = []
    for k in range(n_classes):
        tp = int(np.sum(pred[:, k] & tgt[:, k]))
        fp = int(np.sum(pred[:, k] & ~tgt[:, k]))
        fn = int(np.sum(~pred[:, k] & tgt[:, k]))
        tn = int(np.sum(~pred[:, k] & ~tgt[:, k]))
        confusion[k] = (tp, fp, fn, tn)
        if tp + fp + fn == 0:
            empty.append(k)
            per_class.append(1.0)
        else:
            per_class.append(2.0 * tp / (2.0 * tp + fp + fn))
    scored = [f for k, f in enumerate(per_class) if not (empty_class == "exclude" and k in empty)]
    macro = float(np.mean(scored)) if scored else 1.0
    tp_all, fp_all, fn_all = confusion[:, 0].sum(), confusion[:, 1].sum(), confusion[:, 2].sum()
    micro = 1.0 if tp_all + fp_all + fn_all == 0 else float(2.0 * tp_all / (2.0 * tp_all + fp_all + fn_all))
    return F1Report(macro=macro, micro=micro, per_class=per_class, confusion=confusion, empty_classes=empty)


# --- dataset records ---------------------------------------------------------

@dataclass
class SegmentRecord:
    segment: Segment
    subject: str
    session: str = ""

    @property
    def labels(self):
        return self.segment.labels


def targets_for_role(labels, role: str) -> np.ndarray:
    """Collapse the 5-class multilabel vector onto a classifier head's classes."""
    l = np.asarray(labels)
    if role == CHANNEL:
        return np.array([l[0], l[1] | l[2], l[3] | l[4]], dtype=np.float32)
    if role == PHASE:
        return np.array([l[1] | l[3], l[2] | l[4]], dtype=np.float32)
    if role == LABELING:
        return np.array([l[0], l[1] | l[2] | l[3] | l[4]], dtype=np.float32)
    raise ValueError(f"unknown role {role!r}")


def records_for_role(records, role: str):
    """Drop records with no ground truth for this head (e.g. pure pause for PHASE)."""
    return [r for r in records if targets_for_role(r.labels, role).any()]


def segment_features(segment: Segment, kind: str) -> np.ndarray:
    return feat.standardize(feat.extract(segment, kind).values)


def _feature_batch(segments, kind):
    return np.stack([segment_features(s, kind) for s in segments])[:, None, :, :]


# --- training loop -----------------------------------------------------------

def _evaluate(network, x, y, threshold, batch_size=64):
    preds = []
    for i in range(0, x.shape[0], batch_size):
        preds.append(network.forward(x[i : i + batch_size], train=False))
    p = np.concatenate(preds)
    return f1_score(p >= threshold, y)


def train(model: Network, train_records, val_records, cfg: TrainConfig, role: str, noise_bank: NoiseBank = None):
    """Minibatch Adam with per-epoch augmentation and early stopping on val F1.

    Returns (model restored to its best checkpoint, history list). History rows
    carry epoch, train_loss, val_f1.
    """
    if not train_records or not val_records:
        raise EmptyDataset("train and validation sets must both be non-empty")
    rng = np.random.default_rng(cfg.seed)
    kind = cfg.feature_kind

    x_train = _feature_batch([r.segment for r in train_records], kind)
    y_train = np.stack([targets_for_role(r.labels, role) for r in train_records])
    x_val = _feature_batch([r.segment for r in val_records], kind)
    y_val = np.stack([targets_for_role(r.labels, role) for r in val_records])

    opt = Adam(model, lr=cfg.learning_rate)
    best_f1 = -1.0
    best_epoch = 0
    best_state = None
    since_best = 0
    history = []

    for epoch in range(1, cfg.max_epochs + 1):
        xs, ys = x_train, y_train
        if cfg.augment and noise_bank is not None:
            aug_segments = []
            for r in train_records:
                snr = sample_snr(rng, *cfg.snr_range)
                aug_segments.append(mix_noise(r.segment, noise_bank, snr, rng).samples)
            aug_x = _feature_batch(
                [replace(r.segment, samples=s) for r, s in zip(train_records, aug_segments)], kind
            )
            xs = np.concatenate([x_train, aug_x])
            ys = np.concatenate([y_train, y_train])

        order = rng.permutation(xs.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for i in range(0, order.size, cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            if idx.size < 2:
                continue  # train-mode batchnorm needs more than one element
            out = model.forward(xs[idx], train=True)
            loss, _ = bce_loss(out, ys[idx])
            model.backward(bce_grad_logits(out, ys[idx]), fused_sigmoid=True)
            opt.step()
            epoch_loss += loss
            n_batches += 1

        report = _evaluate(model, x_val, y_val, cfg.threshold)
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1), "val_f1": report.macro})
        log.debug("epoch %d loss %.4f val_f1 %.4f", epoch, history[-1]["train_loss"], report.macro)
        if report.macro > best_f1:
            best_f1 = report.macro
            best_epoch = epoch
            best_state = save_weights(model)
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    if best_state is not None:
        from .nn import load_weights_into

        load_weights_into(model, best_state)
    return model, {"history": history, "best_epoch": best_epoch, "best_f1": best_f1}


def run_loocv(records, spec: ModelSpec, cfg: TrainConfig, noise_bank: NoiseBank = None):
    """One fold per subject: train on the rest, validate on the held-out subject."""
    usable = records_for_role(records, spec.role)
    subjects = sorted({r.subject for r in usable})
    if len(subjects) < 2:
        raise InsufficientSubjects(f"LOOCV needs >= 2 subjects, got {len(subjects)}")
    reports = []
    models = []
    for i, held_out in enumerate(subjects):
        train_recs = [r for r in usable if r.subject != held_out]
        val_recs = [r for r in usable if r.subject == held_out]
        assert not {r.subject for r in train_recs} & {r.subject for r in val_recs}
        fold_cfg = replace(cfg, seed=cfg.seed + i, feature_kind=spec.feature_kind)
        model = build_model(spec, seed=fold_cfg.seed)
        model, info = train(model, train_recs, val_recs, fold_cfg, spec.role, noise_bank=noise_bank)
        x_val = _feature_batch([r.segment for r in val_recs], spec.feature_kind)
        y_val = np.stack([targets_for_role(r.labels, spec.role) for r in val_recs])
        rep = _evaluate(model, x_val, y_val, fold_cfg.threshold)
        log.info("fold %s: macro F1 %.4f (best epoch %d)", held_out, rep.macro, info["best_epoch"])
        reports.append(
            FoldReport(
                held_out_subject=held_out,
                f1=rep.macro,
                per_class_f1=rep.per_class,
                confusion=rep.confusion,
                best_epoch=info["best_epoch"],
                micro_f1=rep.micro,
            )
        )
        models.append(LoadedModel(network=model, spec=spec))
    return reports, models


def summarize_folds(reports) -> dict:
    scores = np.array([r.f1 for r in reports], dtype=np.float64)
    return {
        "folds": {r.held_out_subject: r.f1 for r in reports},
        "avg": float(scores.mean()),
        "sd_population": float(scores.std()),
        "sd_sample": float(scores.std(ddof=1)) if scores.size > 1 else 0.0,
        "max": float(scores.max()),
        "min": float(scores.min()),
    }


def format_summary_table(rows) -> str:
    """Table-1-style text: one row per (classifier, features) summary dict."""
    lines = [f"{'Classifier':<12}{'Features':<18}{'Avg (SD)':<18}{'Max':>8}{'Min':>8}"]
    for role, kind, s in rows:
        avg_sd = f"{100 * s['avg']:.2f} ({100 * s['sd_population']:.2f})"
        lines.append(f"{role:<12}{kind:<18}{avg_sd:<18}{100 * s['max']:>8.2f}{100 * s['min']:>8.2f}")
    return "\n".join(lines)


# --- manifests ----------------------------------------------------------------

@dataclass
class ManifestRow:
    clip_path: str
    subject: str
    session: str
    label_path: str
    tag: str = ""


def load_manifest(path):
    """TSV rows: clip path, subject id, session id, label-track path, exercise tag."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 4:
                raise BreathSenseError(f"{path}:{lineno}: manifest row needs >= 4 TAB fields")
            rows.append(ManifestRow(parts[0], parts[1], parts[2], parts[3], parts[4] if len(parts) > 4 else ""))
    return rows


def build_records(rows, on_skip=None):
    """Read, canonicalize, segment and label every manifest clip."""
    records = []
    for row in rows:
        clip = canonicalize(read_wav(row.clip_path))
        with open(row.label_path, "r", encoding="utf-8") as fh:
            track = parse_labels(fh.read())
        for seg in segment_clip(clip):
            try:
                labeled = assign_labels(seg, track)
            except NoOverlap:
                if on_skip:
                    on_skip(row, seg)
                continue
            records.append(SegmentRecord(segment=labeled, subject=row.subject, session=row.session))
    return records


# --- labeling assistance -------------------------------------------------------

def label_assist(clip, lm: LoadedModel, threshold: float = 0.5) -> LabelTrack:
    """Pre-annotate a clip as pause (0) / breath (9) intervals on the 250 ms grid."""
    clip = canonicalize(clip)
    segments = segment_clip(clip)
    x = _feature_batch(segments, lm.spec.feature_kind)
    scores = []
    for i in range(0, x.shape[0], 64):
        scores.append(lm.network.forward(x[i : i + 64], train=False))
    scores = np.concatenate(scores)
    # cell k covers [0.25k, 0.25k+0.25); the final window also covers its tail
    codes = [0 if s[0] >= s[1] else BREATH_PLACEHOLDER for s in scores]
    codes.append(codes[-1])
    intervals = []
    run_start = 0
    for k in range(1, len(codes) + 1):
        if k == len(codes) or codes[k] != codes[run_start]:
            intervals.append(LabelInterval(run_start * 0.25, k * 0.25, codes[run_start]))
            run_start = k
    return LabelTrack(intervals)
