"""Dataset assembly and the segmentation training loop.

Clips are cut into fixed-length segments on the feature frame grid; each
batch runs one forward/backward pass through the handwritten gradient engine
and one ADAM step.  The objective per segment is
alpha * BCE + beta * ||X - W H||^2 + gamma * ||H||_1, averaged over the
batch; the frozen dictionary W never receives gradient.

Feature, spectrogram, and label frame counts may disagree by at most one
frame (the STFT drops a partial frame at the clip edge); the surplus frame
is truncated, anything larger is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import CLASS_NAMES, Manifest
from .errors import DimensionError, NumericError
from .evaluate import F1Report, accumulate_counts
from .frontend import load_audio, log_mel, read_features, stft_magnitude
from .labels import label_matrix_from_range, read_label_file
from .network import (LabelMatrix, SegModel, _backward_from_cache, _forward_cache,
                      bce_masked, init_model, sigmoid)
from .nmf import Dictionary, SnmfConfig, train_snmf
from .optim import adam_step, init_adam


@dataclass
class FrontendSettings:
    """STFT/mel configuration shared by every pipeline stage."""

    n_fft: int = 512
    win_len: int = 400
    hop: int = 320
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float | None = None
    recon_log: bool = False  # reconstruct log1p-compressed magnitudes instead of linear

    @property
    def hop_seconds(self) -> float:
        return self.hop / 16000.0


@dataclass
class TrainConfig:
    """Loss weights and optimization settings."""

    alpha: float = 10.0
    beta: float = 1.0
    gamma: float = 0.1
    lr: float = 1e-3
    batch_size: int = 64
    segment_seconds: float = 4.0
    epochs: int = 10
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("at least one loss weight must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class ClipData:
    clip_id: str
    features: np.ndarray  # (D, T) float64
    spect: np.ndarray  # (F, T) float64
    labels: np.ndarray  # (C, T) int8 symbols with -1 for unannotated
    hop: float


@dataclass
class TrainSegment:
    features: np.ndarray
    spect: np.ndarray
    labels: LabelMatrix


def load_clip(manifest: Manifest, row, settings: FrontendSettings) -> ClipData:
    """Load one manifest row, aligning features, spectrogram, and labels."""
    clip = load_audio(manifest.resolve(row.audio))
    spec = stft_magnitude(clip, n_fft=settings.n_fft, win_len=settings.win_len, hop=settings.hop)
    if row.features:
        feats = read_features(manifest.resolve(row.features))
    else:
        feats = log_mel(spec, n_mels=settings.n_mels, f_min=settings.f_min, f_max=settings.f_max)
    labels, label_hop = read_label_file(manifest.resolve(row.labels))

    lengths = {"features": feats.frames, "spectrogram": spec.frames, "labels": labels.shape[1]}
    t = min(lengths.values())
    if max(lengths.values()) - t > 1:
        raise DimensionError(f"{row.clip_id}: frame counts differ by more than one: {lengths}")
    xv = spec.values[:, :t]
    if settings.recon_log:
        xv = np.log1p(xv)
    return ClipData(clip_id=row.clip_id,
                    features=np.asarray(feats.values[:, :t], dtype=np.float32),
                    spect=np.asarray(xv, dtype=np.float32),
                    labels=labels[:, :t],
                    hop=spec.hop)


def load_split(manifest: Manifest, split: str, settings: FrontendSettings) -> list[ClipData]:
    rows = manifest.for_split(split)
    if not rows:
        raise ValueError(f"manifest has no '{split}' rows")
    return [load_clip(manifest, row, settings) for row in rows]


def build_segments(clips: list[ClipData], segment_seconds: float) -> list[TrainSegment]:
    """Cut clips into non-overlapping fixed-length training segments."""
    segments = []
    for clip in clips:
        seg_frames = max(1, int(round(segment_seconds / clip.hop)))
        t = clip.features.shape[1]
        for start in range(0, t - seg_frames + 1, seg_frames):
            end = start + seg_frames
            segments.append(TrainSegment(
                features=clip.features[:, start:end],
                spect=clip.spect[:, start:end],
                labels=label_matrix_from_range(clip.labels, start, end),
            ))
    return segments


def _batch_loss_and_grads(model: SegModel, feats: np.ndarray, spects: np.ndarray,
                          labels: list[LabelMatrix], cfg: TrainConfig):
    """Mean-over-batch loss components and parameter gradients."""
    batch = feats.shape[0]
    cache = _forward_cache(model, feats)
    lay = cache["layout"]
    h_flat, logits_flat = cache["h_flat"], cache["logits_flat"]
    logits_core = lay.core(logits_flat)  # (C, B, T) view

    g_logits_flat = np.zeros_like(logits_flat)
    g_logits_core = lay.core(g_logits_flat)
    bce_total = 0.0
    for b, lab in enumerate(labels):
        n_cells = int(lab.mask.sum()) * lab.frames
        if n_cells == 0:
            continue
        z = logits_core[:, b, :][lab.mask]
        y = lab.values[lab.mask]
        bce_total += float((np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))).sum() / n_cells)
        g_logits_core[:, b, :][lab.mask] = cfg.alpha * (sigmoid(z) - y) / n_cells / batch

    g_h_flat = None
    nmf_total = 0.0
    if cfg.beta != 0.0:
        if model.w_ref is None:
            raise ValueError("reconstruction loss requires a dictionary attached to the model")
        w = np.asarray(model.w_ref.values, dtype=h_flat.dtype)
        diff = w @ h_flat
        lay.core(diff)[...] -= spects.transpose(1, 0, 2)
        nmf_total = float(np.sum(diff * diff))
        g_h_flat = (cfg.beta * 2.0 / batch) * (w.T @ diff)
    l1_total = float(h_flat.sum())
    if cfg.gamma != 0.0:
        if g_h_flat is None:
            g_h_flat = np.zeros_like(h_flat)
        lay.core(g_h_flat)[...] += cfg.gamma / batch

    grads = _backward_from_cache(model, cache, g_logits_flat, g_h_flat)
    comps = {"bce": bce_total / batch, "nmf": nmf_total / batch, "l1": l1_total / batch}
    comps["total"] = cfg.alpha * comps["bce"] + cfg.beta * comps["nmf"] + cfg.gamma * comps["l1"]
    return comps, grads


def dev_metrics(model: SegModel, clips: list[ClipData], threshold: float) -> dict:
    """Mean BCE and aggregate per-class F1 over full-length clips."""
    report = F1Report()
    bce_sum = 0.0
    for clip in clips:
        cache = _forward_cache(model, clip.features[None])
        logits = cache["logits"][0]
        lab = label_matrix_from_range(clip.labels, 0, clip.labels.shape[1])
        bce_sum += bce_masked(logits, lab)
        binary = (sigmoid(logits) > threshold).astype(np.int8)
        accumulate_counts(report, binary, lab, CLASS_NAMES[: lab.classes])
    f1s = {name: entry.f1 for name, entry in report.per_class.items() if entry.defined}
    return {"bce": bce_sum / len(clips), "f1": f1s, "macro_f1": report.macro_f1()}


def train(model: SegModel, manifest: Manifest, cfg: TrainConfig,
          settings: FrontendSettings | None = None) -> tuple[SegModel, list[dict]]:
    """Train on the manifest's train split, keeping the best-dev checkpoint.

    Returns the model (parameters set to the best dev epoch) and one trace
    entry per epoch with train loss components and dev metrics.
    """
    settings = settings or FrontendSettings()
    train_clips = load_split(manifest, "train", settings)
    dev_clips = load_split(manifest, "dev", settings)
    segments = build_segments(train_clips, cfg.segment_seconds)
    if not segments:
        raise ValueError("train split yields no segments; clips shorter than segment_seconds?")

    rng = np.random.default_rng(cfg.seed)
    params = {name: arr.copy() for name, arr in model.parameters()}
    state = init_adam(params)
    best_macro = -1.0
    best_params = {name: arr.copy() for name, arr in params.items()}
    best_epoch = -1
    trace = []

    # single-precision working copy for the compute-heavy passes; ADAM keeps
    # double-precision master weights
    worker = init_model(model.d, model.k, model.c, seed=0, channels=model.channels,
                        n_blocks=model.n_blocks, dilations=model.dilations)
    worker.w_ref = model.w_ref
    worker.load_parameters(params, dtype=np.float32)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(segments))
        sums = {"bce": 0.0, "nmf": 0.0, "l1": 0.0, "total": 0.0}
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            feats = np.stack([segments[i].features for i in idx])
            spects = np.stack([segments[i].spect for i in idx])
            labs = [segments[i].labels for i in idx]
            comps, grads = _batch_loss_and_grads(worker, feats, spects, labs, cfg)
            if not np.isfinite(comps["total"]):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            params, state = adam_step(params, grads, state, cfg.lr)
            worker.load_parameters(params, dtype=np.float32)
            for key in sums:
                sums[key] += comps[key]
            n_batches += 1

        dev = dev_metrics(worker, dev_clips, cfg.threshold)
        entry = {"epoch": epoch}
        entry.update({f"train_{k}": v / n_batches for k, v in sums.items()})
        entry.update({"dev_bce": dev["bce"], "dev_f1": dev["f1"], "dev_macro_f1": dev["macro_f1"]})
        trace.append(entry)
        if dev["macro_f1"] > best_macro:
            best_macro = dev["macro_f1"]
            best_params = {name: arr.copy() for name, arr in params.items()}
            best_epoch = epoch

    model.load_parameters(best_params)
    for entry in trace:
        entry["best_epoch"] = best_epoch
    return model, trace


def pretrain_dictionary(manifest: Manifest, settings: FrontendSettings, k: int,
                        mu: float = 0.1, max_iters: int = 300, rel_tol: float = 1e-5,
                        seed: int = 0, max_frames: int = 3000) -> Dictionary:
    """Fit the frequency codebook on subsampled train-split spectrogram frames.

    Frames are normalized to unit L2 before factorization so codebook
    allocation follows how often a spectral shape occurs rather than how loud
    it is; silent frames drop out.  The returned columns are unit-norm either
    way, so downstream use is unaffected.
    """
    clips = load_split(manifest, "train", settings)
    x = np.concatenate([np.asarray(c.spect, dtype=np.float64) for c in clips], axis=1)
    norms = np.linalg.norm(x, axis=0)
    x = x[:, norms > 1e-8] / norms[norms > 1e-8]
    if x.shape[1] > max_frames:
        stride = int(np.ceil(x.shape[1] / max_frames))
        x = x[:, ::stride]
    cfg = SnmfConfig(k=k, mu=mu, max_iters=max_iters, rel_tol=rel_tol, seed=seed)
    dictionary, _ = train_snmf(x, cfg)
    return dictionary


def evaluate_split(model: SegModel, manifest: Manifest, split: str,
                   settings: FrontendSettings | None = None,
                   threshold: float = 0.5) -> F1Report:
    """Aggregate frame counts over a whole split and score per class."""
    settings = settings or FrontendSettings()
    clips = load_split(manifest, split, settings)
    report = F1Report()
    for clip in clips:
        cache = _forward_cache(model, clip.features[None])
        binary = (sigmoid(cache["logits"][0]) > threshold).astype(np.int8)
        lab = label_matrix_from_range(clip.labels, 0, clip.labels.shape[1])
        accumulate_counts(report, binary, lab, CLASS_NAMES[: lab.classes])
    return report


def mean_activation_l1(model: SegModel, manifest: Manifest, split: str,
                       settings: FrontendSettings | None = None) -> float:
    """Mean per-frame ||H||_1 over a split."""
    settings = settings or FrontendSettings()
    total = 0.0
    frames = 0
    for clip in load_split(manifest, split, settings):
        cache = _forward_cache(model, clip.features[None])
        total += float(cache["h"].sum())
        frames += clip.features.shape[1]
    return total / frames


def reconstruction_error(model: SegModel, manifest: Manifest, split: str,
                         settings: FrontendSettings | None = None) -> float:
    """Mean per-frame ||X - WH||^2 over a split (requires an attached dictionary)."""
    settings = settings or FrontendSettings()
    if model.w_ref is None:
        raise ValueError("model has no attached dictionary")
    w = model.w_ref.values
    total = 0.0
    frames = 0
    for clip in load_split(manifest, split, settings):
        cache = _forward_cache(model, clip.features[None])
        diff = w @ cache["h"][0] - clip.spect
        total += float(np.sum(diff * diff))
        frames += clip.features.shape[1]
    return total / frames
