"""Deterministic synthetic corpus with exact frame labels.

Four frame-level classes: speech-like (AM-modulated harmonic stacks shaped by
formant bands), overlap (two simultaneous speech-like streams), music-like
(sustained triadic harmonics, no syllabic modulation), and noise (broadband).
Events are scheduled on the 20 ms hop grid, so labels are exact by
construction: the speech bit is "at least one speech stream active", the
overlap bit "at least two".  Speech-like events (including overlap events)
never collide with each other, and music/noise events never collide within
their own class, which keeps per-class durations equal to the sum of
scheduled event durations.

Everything derives from integer seed sequences, so a corpus is bitwise
reproducible; clips can be synthesized in parallel without changing a byte.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, FormatError
from .frontend import SAMPLE_RATE, AudioClip, save_audio
from .labels import write_label_file

CLASS_NAMES = ("speech", "overlap", "music", "noise")

HOP_SECONDS = 0.02


@dataclass
class CorpusSpec:
    """Generation settings; rates are events per minute, levels are dB RMS."""

    seed: int = 0
    train_minutes: float = 20.0
    dev_minutes: float = 5.0
    test_minutes: float = 5.0
    clip_seconds: float = 10.0
    sample_rate: int = SAMPLE_RATE
    # defaults give an integral event count per 10 s clip, so realized class
    # durations track their expectations with duration variance only
    rate_speech: float = 6.0
    rate_overlap: float = 6.0
    rate_music: float = 6.0
    rate_noise: float = 6.0
    dur_speech: tuple = (1.0, 3.0)
    dur_overlap: tuple = (1.0, 2.5)
    dur_music: tuple = (1.5, 4.0)
    dur_noise: tuple = (1.0, 3.0)
    level_speech: tuple = (-24.0, -18.0)
    level_music: tuple = (-24.0, -18.0)
    level_noise: tuple = (-24.0, -18.0)

    def __post_init__(self):
        if min(self.train_minutes, self.dev_minutes, self.test_minutes) <= 0:
            raise ConfigError("split durations must be positive")
        if self.clip_seconds <= 0:
            raise ConfigError("clip_seconds must be positive")

    def rate(self, cls: str) -> float:
        return getattr(self, f"rate_{cls}")

    def duration_range(self, cls: str) -> tuple:
        return getattr(self, f"dur_{cls}")

    def expected_class_seconds(self, cls: str, minutes: float) -> float:
        """Expected labeled seconds for one class over a split."""
        lo, hi = self.duration_range(cls)
        expected = self.rate(cls) * minutes * 0.5 * (lo + hi)
        if cls == "speech":
            lo2, hi2 = self.duration_range("overlap")
            expected += self.rate("overlap") * minutes * 0.5 * (lo2 + hi2)
        return expected


@dataclass
class ManifestRow:
    clip_id: str
    audio: str
    features: str
    labels: str
    split: str


@dataclass
class Manifest:
    rows: list = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def for_split(self, split: str) -> list:
        return [r for r in self.rows if r.split == split]

    def resolve(self, rel: str) -> Path:
        return self.root / rel


def save_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "audio", "features", "labels", "split"])
        for r in manifest.rows:
            writer.writerow([r.clip_id, r.audio, r.features, r.labels, r.split])


def load_manifest(path) -> Manifest:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "audio", "features", "labels", "split"]:
            raise FormatError(f"{path}: unexpected manifest header {header}")
        for line in reader:
            if len(line) != 5:
                raise FormatError(f"{path}: malformed row {line}")
            rows.append(ManifestRow(*line))
    manifest = Manifest(rows=rows, root=path.parent)
    seen = {}
    for r in manifest.rows:
        if r.clip_id in seen:
            raise FormatError(f"{path}: duplicate clip id {r.clip_id}")
        seen[r.clip_id] = r.split
        for rel in (r.audio, r.labels) + ((r.features,) if r.features else ()):
            if not (manifest.root / rel).exists():
                raise FormatError(f"{path}: missing file {rel} referenced by {r.clip_id}")
    return manifest


def _ramp(signal: np.ndarray, sr: int, ms: float = 10.0) -> np.ndarray:
    n = min(int(sr * ms / 1000), len(signal) // 2)
    if n > 0:
        env = np.ones(len(signal))
        env[:n] = np.linspace(0.0, 1.0, n)
        env[-n:] = np.linspace(1.0, 0.0, n)
        signal = signal * env
    return signal


def _rms_normalize(signal: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(signal * signal))
    return signal / rms if rms > 0 else signal


def _harmonic_stack(rng, n: int, sr: int, f0: float, amps: np.ndarray, vibrato: float) -> np.ndarray:
    t = np.arange(n) / sr
    drift_rate = rng.uniform(0.5, 2.0)
    drift = 1.0 + vibrato * np.sin(2 * np.pi * drift_rate * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * drift) / sr
    sig = np.zeros(n)
    for k, a in enumerate(amps, start=1):
        if k * f0 >= sr / 2:
            break
        sig += a * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return sig


# Class registers partition the spectrum: primary talkers stay below 2.8 kHz,
# the overlapping second talker has a higher pitch register plus a guaranteed
# formant band at 2.9-3.3 kHz that nothing else reaches tonally, music-like
# events own the band above 3.9 kHz, and noise is broadband.  Pitches come
# from small discrete inventories, so a non-negative codebook can learn one
# clean comb component per pitch class instead of smearing a continuum
# across atoms.
SPEECH_F0 = (98.0, 117.0, 139.0, 165.0, 196.0, 233.0)
SECOND_VOICE_F0 = (262.0, 294.0, 330.0, 370.0)  # overlapping talker, higher register
MUSIC_ROOT = (3951.0, 4435.0, 4978.0, 5274.0)
PRIMARY_BAND_TOP = 2800.0
PRIMARY_FORMANTS = ((300, 900), (900, 1700), (1700, 2500))
SECOND_BAND_TOP = 3400.0
SECOND_FORMANTS = ((300, 900), (900, 2200), (2900, 3300))


def _voiced_stream(rng, n: int, sr: int, f0: float, band_top: float, formant_bands) -> np.ndarray:
    """Harmonic comb with random formant bumps under a syllabic envelope."""
    n_harm = min(int(band_top / f0), 40)
    harm_freqs = f0 * np.arange(1, n_harm + 1)
    envelope = np.full(n_harm, 0.05)
    for lo, hi in formant_bands:
        center = rng.uniform(lo, hi)
        width = rng.uniform(150.0, 400.0)
        envelope += np.exp(-0.5 * ((harm_freqs - center) / width) ** 2)
    amps = envelope / np.arange(1, n_harm + 1) ** 0.8
    sig = _harmonic_stack(rng, n, sr, f0, amps, vibrato=0.03)
    t = np.arange(n) / sr
    am_rate = rng.uniform(2.5, 7.0)
    # depth capped so syllable troughs keep the comb visible at frame level
    depth = rng.uniform(0.4, 0.7)
    syllables = (0.5 + 0.5 * np.sin(2 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi))) ** 2
    sig *= (1.0 - depth) + depth * syllables
    return _ramp(_rms_normalize(sig), sr)


def synth_speech_stream(rng, n: int, sr: int, f0: float | None = None) -> np.ndarray:
    """One primary-talker stream."""
    if f0 is None:
        f0 = float(rng.choice(SPEECH_F0))
    return _voiced_stream(rng, n, sr, f0, PRIMARY_BAND_TOP, PRIMARY_FORMANTS)


def synth_music(rng, n: int, sr: int) -> np.ndarray:
    """Sustained triad in the high band, above all speech content."""
    root = float(rng.choice(MUSIC_ROOT))
    sig = np.zeros(n)
    for ratio in (1.0, 1.25, 1.5):
        sig += _harmonic_stack(rng, n, sr, root * ratio, np.array([1.0]), vibrato=0.005)
    return _ramp(_rms_normalize(sig), sr)


def synth_noise(rng, n: int, sr: int) -> np.ndarray:
    """Broadband noise with a random first-order spectral tilt."""
    white = rng.normal(size=n)
    rho = rng.uniform(-0.3, 0.6)
    shaped = lfilter([1.0], [1.0, -rho], white)
    return _ramp(_rms_normalize(shaped), sr)


def synth_overlap(rng, n: int, sr: int) -> np.ndarray:
    """Two concurrent speech-like streams; the second talker interjects from a
    higher pitch register with its own formant band, so overlapping speech has
    a spectral signature of its own."""
    a = synth_speech_stream(rng, n, sr, f0=float(rng.choice(SPEECH_F0)))
    b = _voiced_stream(rng, n, sr, float(rng.choice(SECOND_VOICE_F0)),
                       SECOND_BAND_TOP, SECOND_FORMANTS)
    gain = 10 ** (rng.uniform(-2.0, 2.0) / 20.0)
    return _rms_normalize(a + gain * b)


def _schedule(rng, n_events: int, dur_range: tuple, total_frames: int,
              occupied: list) -> list:
    """Place events on the hop grid, rejecting collisions with ``occupied``.

    Returns (start_frame, end_frame) pairs and appends them to ``occupied``.
    """
    placed = []
    for _ in range(n_events):
        dur_frames = max(1, int(round(rng.uniform(*dur_range) / HOP_SECONDS)))
        dur_frames = min(dur_frames, total_frames)
        for _ in range(20):
            start = int(rng.integers(0, total_frames - dur_frames + 1))
            end = start + dur_frames
            if all(end <= s or start >= e for s, e in occupied):
                occupied.append((start, end))
                placed.append((start, end))
                break
    return placed


def _bernoulli_count(rng, expected: float) -> int:
    base = int(expected)
    return base + (1 if rng.random() < expected - base else 0)


def synthesize_clip(spec: CorpusSpec, split_index: int, clip_index: int):
    """Build one clip: returns (samples, label_frames) with labels on the hop grid."""
    rng = np.random.default_rng([spec.seed, split_index, clip_index])
    sr = spec.sample_rate
    n = int(round(spec.clip_seconds * sr))
    total_frames = int(round(spec.clip_seconds / HOP_SECONDS))

    speech_track: list = []  # shared by speech and overlap events
    events = []
    for cls, synth, stream_count, occupied in (
        ("speech", synth_speech_stream, 1, speech_track),
        ("overlap", synth_overlap, 2, speech_track),
        ("music", synth_music, 0, []),
        ("noise", synth_noise, 0, []),
    ):
        n_events = _bernoulli_count(rng, spec.rate(cls) * spec.clip_seconds / 60.0)
        for start, end in _schedule(rng, n_events, spec.duration_range(cls), total_frames, occupied):
            events.append((cls, synth, stream_count, start, end))

    mix = np.zeros(n)
    streams = np.zeros(total_frames, dtype=np.int32)
    music = np.zeros(total_frames, dtype=bool)
    noise = np.zeros(total_frames, dtype=bool)
    for cls, synth, stream_count, start, end in events:
        s0 = int(round(start * HOP_SECONDS * sr))
        s1 = min(int(round(end * HOP_SECONDS * sr)), n)
        sig = synth(rng, s1 - s0, sr)
        if cls in ("speech", "overlap"):
            level = rng.uniform(*spec.level_speech)
            streams[start:end] += stream_count
        elif cls == "music":
            level = rng.uniform(*spec.level_music)
            music[start:end] = True
        else:
            level = rng.uniform(*spec.level_noise)
            noise[start:end] = True
        mix[s0:s1] += sig * 10 ** (level / 20.0)

    peak = np.max(np.abs(mix))
    if peak > 0.99:
        mix *= 0.99 / peak

    label_frames = np.zeros((len(CLASS_NAMES), total_frames), dtype=np.int8)
    label_frames[0] = streams >= 1
    label_frames[1] = streams >= 2
    label_frames[2] = music
    label_frames[3] = noise
    return mix, label_frames


def _write_clip(args):
    spec, split, split_index, clip_index, out_dir = args
    clip_id = f"{split}-{clip_index:04d}"
    samples, label_frames = synthesize_clip(spec, split_index, clip_index)
    audio_rel = os.path.join("audio", f"{clip_id}.wav")
    label_rel = os.path.join("labels", f"{clip_id}.lab")
    save_audio(AudioClip(samples=samples, sample_rate=spec.sample_rate),
               os.path.join(out_dir, audio_rel), fmt="float32")
    write_label_file(os.path.join(out_dir, label_rel), label_frames, HOP_SECONDS)
    return ManifestRow(clip_id=clip_id, audio=audio_rel, features="", labels=label_rel, split=split)


def generate_corpus(spec: CorpusSpec, out_dir, workers: int = 1) -> Manifest:
    """Synthesize all splits under ``out_dir`` and write manifest.csv."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    jobs = []
    for split_index, (split, minutes) in enumerate(
        (("train", spec.train_minutes), ("dev", spec.dev_minutes), ("test", spec.test_minutes))
    ):
        n_clips = max(1, int(round(minutes * 60.0 / spec.clip_seconds)))
        for clip_index in range(n_clips):
            jobs.append((spec, split, split_index, clip_index, str(out_dir)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_write_clip, jobs))
    else:
        rows = [_write_clip(job) for job in jobs]

    manifest = Manifest(rows=rows, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    return manifest
