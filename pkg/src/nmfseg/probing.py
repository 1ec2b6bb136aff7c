"""Linear probes over frozen activations.

A probe task holds labeled activation sequences; each is zero-padded (or
truncated) to a fixed frame count and averaged over time into one K-vector,
then a single no-bias linear layer is trained with softmax cross-entropy.
Scores are accuracy and unweighted average recall (mean of per-class
recalls).  Probing reads the segmentation model but never writes to it.

Desk-scale probe tasks are synthetic (tone pitch class, noise spectral tilt,
AM rate); externally supplied audio can be probed through a CSV manifest of
(path, label) rows.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .frontend import AudioClip, load_audio, log_mel, read_features, stft_magnitude
from .network import SegModel, forward
from .nmf import Activations
from .optim import adam_step, init_adam


@dataclass
class ProbeTask:
    """Labeled activation sequences padded to a common length."""

    name: str
    class_count: int
    items: list  # (H matrix (K, T), int label)
    pad_to: int

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError(f"{self.name}: need at least 2 classes, got {self.class_count}")
        for h, label in self.items:
            if not (0 <= label < self.class_count):
                raise ValueError(f"{self.name}: label {label} out of range")

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        """Zero-pad/truncate to ``pad_to`` frames, then average over time."""
        vecs, labels = [], []
        for h, label in self.items:
            h = np.asarray(h, dtype=np.float64)
            t = min(h.shape[1], self.pad_to)
            padded = np.zeros((h.shape[0], self.pad_to))
            padded[:, :t] = h[:, :t]
            vecs.append(padded.mean(axis=1))
            labels.append(label)
        return np.stack(vecs), np.asarray(labels, dtype=np.int64)


@dataclass
class ProbeResult:
    accuracy: float
    uar: float
    per_class_recall: dict  # class index -> recall (absent classes omitted)
    confusion: np.ndarray  # (class_count, class_count), rows = reference


def extract_frozen_h(model: SegModel, s) -> Activations:
    """Forward pass for representation extraction; parameters untouched."""
    h, _ = forward(model, s)
    return h


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_probe(task: ProbeTask, epochs: int = 200, lr: float = 1e-2, seed: int = 0) -> np.ndarray:
    """Fit the probe weights (class_count x K) by full-batch ADAM."""
    if not task.items:
        raise ValueError(f"{task.name}: no items")
    x, y = task.pooled()
    present = np.unique(y)
    if len(present) < 2:
        raise ValueError(f"{task.name}: training items cover a single class")
    k = x.shape[1]
    rng = np.random.default_rng(seed)
    bound = np.sqrt(1.0 / k)
    params = {"w": rng.uniform(-bound, bound, size=(task.class_count, k))}
    state = init_adam(params)
    onehot = np.zeros((len(y), task.class_count))
    onehot[np.arange(len(y)), y] = 1.0
    for _ in range(epochs):
        probs = _softmax(x @ params["w"].T)
        grads = {"w": (probs - onehot).T @ x / len(y)}
        params, state = adam_step(params, grads, state, lr)
    return params["w"]


def eval_probe(weights: np.ndarray, task: ProbeTask) -> ProbeResult:
    """Accuracy, UAR, per-class recalls, and the confusion matrix."""
    x, y = task.pooled()
    pred = np.argmax(x @ np.asarray(weights, dtype=np.float64).T, axis=1)
    c = task.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    for ref, hyp in zip(y, pred):
        confusion[ref, hyp] += 1
    accuracy = float(np.mean(pred == y))
    recalls = {}
    for cls in range(c):
        support = confusion[cls].sum()
        if support > 0:
            recalls[cls] = float(confusion[cls, cls] / support)
    if len(recalls) < c:
        warnings.warn(f"{task.name}: {c - len(recalls)} classes absent from evaluation; "
                      "UAR averages the defined recalls only", stacklevel=2)
    uar = float(np.mean(list(recalls.values()))) if recalls else 0.0
    return ProbeResult(accuracy=accuracy, uar=uar, per_class_recall=recalls, confusion=confusion)


def result_to_dict(result: ProbeResult) -> dict:
    return {
        "accuracy": result.accuracy,
        "uar": result.uar,
        "per_class_recall": {str(k): v for k, v in result.per_class_recall.items()},
        "confusion": result.confusion.tolist(),
    }


def write_result_json(results: dict, path) -> None:
    """Serialize {task name -> ProbeResult} to JSON."""
    payload = {name: result_to_dict(res) for name, res in results.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- synthetic probe material -----------------------------------------------

def _tone(rng, n: int, sr: int, freq: float) -> np.ndarray:
    t = np.arange(n) / sr
    return np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))


def synth_probe_clip(task: str, label: int, seed: int, seconds: float = 1.0,
                     sr: int = 16000) -> AudioClip:
    """One labeled probe clip; classes are separated by construction.

    tone-class: pure tones in disjoint frequency bands per label.
    noise-color: white noise with per-label first-order spectral tilt.
    am-rate: amplitude-modulated tone, modulation rate band per label.
    """
    rng = np.random.default_rng([seed, label])
    n = int(seconds * sr)
    t = np.arange(n) / sr
    if task == "tone-class":
        base = 250.0 * (2.0 ** label)  # octave-spaced bands
        sig = _tone(rng, n, sr, rng.uniform(base, base * 1.4))
    elif task == "noise-color":
        from scipy.signal import lfilter
        rho = (-0.8, 0.0, 0.8)[label % 3]
        sig = lfilter([1.0], [1.0, -rho], rng.normal(size=n))
    elif task == "am-rate":
        rate = (2.0, 8.0, 24.0)[label % 3] * rng.uniform(0.85, 1.15)
        carrier = _tone(rng, n, sr, rng.uniform(400, 1200))
        sig = carrier * (0.5 + 0.5 * np.sin(2 * np.pi * rate * t))
    else:
        raise ValueError(f"unknown probe task {task!r}")
    rms = np.sqrt(np.mean(sig * sig))
    sig = sig / rms * 10 ** (rng.uniform(-44.0, -40.0) / 20.0)
    return AudioClip(samples=sig, sample_rate=sr)


def build_synthetic_task(model: SegModel, task: str, n_classes: int, per_class: int,
                         seed: int, settings=None, seconds: float = 1.0) -> ProbeTask:
    """Generate clips, extract frozen activations, and assemble a ProbeTask."""
    from .training import FrontendSettings
    settings = settings or FrontendSettings()
    items = []
    pad_to = 0
    for label in range(n_classes):
        for i in range(per_class):
            clip = synth_probe_clip(task, label, seed * 100003 + i, seconds=seconds)
            spec = stft_magnitude(clip, n_fft=settings.n_fft, win_len=settings.win_len, hop=settings.hop)
            feats = log_mel(spec, n_mels=settings.n_mels, f_min=settings.f_min, f_max=settings.f_max)
            h = extract_frozen_h(model, feats)
            items.append((h.values, label))
            pad_to = max(pad_to, h.values.shape[1])
    return ProbeTask(name=task, class_count=n_classes, items=items, pad_to=pad_to)


def load_probe_manifest(model: SegModel, path, name: str = "manifest", settings=None) -> ProbeTask:
    """Build a task from CSV rows of (audio-or-feature path, integer label)."""
    from .training import FrontendSettings
    settings = settings or FrontendSettings()
    root = Path(path).parent
    items = []
    pad_to = 0
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: malformed probe row {row}")
            src, label = root / row[0], int(row[1])
            if str(src).endswith(".nsf"):
                feats = read_features(src)
            else:
                clip = load_audio(src)
                spec = stft_magnitude(clip, n_fft=settings.n_fft, win_len=settings.win_len, hop=settings.hop)
                feats = log_mel(spec, n_mels=settings.n_mels, f_min=settings.f_min, f_max=settings.f_max)
            h = extract_frozen_h(model, feats)
            items.append((h.values, label))
            pad_to = max(pad_to, h.values.shape[1])
    labels = sorted({label for _, label in items})
    return ProbeTask(name=name, class_count=max(labels) + 1, items=items, pad_to=pad_to)
