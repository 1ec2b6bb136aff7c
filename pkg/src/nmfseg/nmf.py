"""Sparse NMF: dictionary pretraining, activation inference, reconstruction.

The factorization X ~ WH (all entries non-negative) is fitted by alternating
multiplicative updates

    H <- H * (W^T X) / (W^T W H + mu + delta)
    W <- W * (X H^T) / (W H H^T + delta)

where ``mu`` weights an L1 penalty on H and ``delta`` guards against 0/0.
The traced objective is 0.5*||X - WH||_F^2 + mu*||H||_1; under this scaling
both updates are exact majorization-minimization steps, so the objective is
non-increasing at every iteration.

Trained dictionaries persist as "NSD1" files: magic, F and K as little-endian
u32, F*K little-endian f32 values column by column, then a 16-byte footer
holding the training mu (f64) and seed (i64).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, NumericError

DENOM_GUARD = 1e-12

DICTIONARY_MAGIC = b"NSD1"


@dataclass
class Dictionary:
    """Non-negative frequency codebook W (F x K) with unit-L2 columns."""

    values: np.ndarray
    mu: float = 0.0
    seed: int = 0
    objective_trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"dictionary must be 2-D, got shape {self.values.shape}")

    @property
    def freq_bins(self) -> int:
        return self.values.shape[0]

    @property
    def components(self) -> int:
        return self.values.shape[1]

    def validate(self, tol: float = 1e-6) -> None:
        if np.any(self.values < 0):
            raise ValueError("dictionary has negative entries")
        norms = np.linalg.norm(self.values, axis=0)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError(f"dictionary columns not unit-norm (max deviation {np.max(np.abs(norms - 1.0)):.2e})")


@dataclass
class Activations:
    """Non-negative activation matrix H (K x T)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"activations must be 2-D, got shape {self.values.shape}")

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class SnmfConfig:
    """Settings for sparse-NMF dictionary training."""

    k: int = 256
    mu: float = 0.1
    max_iters: int = 500
    rel_tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")


def _check_shapes(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> None:
    if w.shape[0] != x.shape[0] or h.shape[1] != x.shape[1] or w.shape[1] != h.shape[0]:
        raise DimensionError(f"shape mismatch: X {x.shape}, W {w.shape}, H {h.shape}")


def update_h(x: np.ndarray, w: np.ndarray, h: np.ndarray, mu: float) -> np.ndarray:
    """One multiplicative activation update; zeros in H are absorbing."""
    _check_shapes(x, w, h)
    numer = w.T @ x
    denom = (w.T @ w) @ h + mu + DENOM_GUARD
    return h * numer / denom


def update_w(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One multiplicative dictionary update (no normalization applied)."""
    _check_shapes(x, w, h)
    numer = x @ h.T
    denom = w @ (h @ h.T) + DENOM_GUARD
    return w * numer / denom


def normalize_columns(w: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale W columns to unit L2 norm, folding the norms into H rows.

    The product WH is unchanged.  All-zero columns are left untouched.
    """
    norms = np.linalg.norm(w, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return w / safe, h * safe[:, None]


def reconstruct(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Spectrogram estimate WH."""
    if w.shape[1] != h.shape[0]:
        raise DimensionError(f"inner dimensions disagree: W {w.shape}, H {h.shape}")
    return w @ h


def nmf_loss(x: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    """Squared reconstruction error ||X - WH||_F^2 (sum over all entries)."""
    _check_shapes(x, w, h)
    diff = x - w @ h
    return float(np.sum(diff * diff))


def snmf_objective(x: np.ndarray, w: np.ndarray, h: np.ndarray, mu: float) -> float:
    """Training objective 0.5*||X - WH||_F^2 + mu*||H||_1."""
    return 0.5 * nmf_loss(x, w, h) + mu * float(np.sum(np.abs(h)))


def train_snmf(x: np.ndarray, cfg: SnmfConfig) -> tuple[Dictionary, Activations]:
    """Fit a sparse NMF dictionary to a non-negative matrix.

    Alternates activation and dictionary updates until the relative objective
    decrease falls below ``cfg.rel_tol`` or ``cfg.max_iters`` is reached.
    The per-iteration objective values are recorded on the returned
    Dictionary; both updates are majorization-minimization steps, so the
    trace is non-increasing.  Column normalization (norms folded into H)
    happens once after the loop: doing it inside the loop would perturb the
    L1 term between iterations and break that guarantee.

    An all-zero input short-circuits: the (normalized) initial dictionary is
    returned with H = 0 and a zero objective.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("input matrix has negative entries")
    f, t = x.shape
    if t < cfg.k:
        warnings.warn(f"only {t} frames for {cfg.k} components; dictionary may be underdetermined", stacklevel=2)

    rng = np.random.default_rng(cfg.seed)
    # uniform over (0, 1]: strictly positive so no component starts locked at zero
    w = 1.0 - rng.random((f, cfg.k))
    h = 1.0 - rng.random((cfg.k, t))

    if not np.any(x):
        w, _ = normalize_columns(w, h)
        return (
            Dictionary(values=w, mu=cfg.mu, seed=cfg.seed, objective_trace=[0.0]),
            Activations(values=np.zeros((cfg.k, t))),
        )

    w, h = normalize_columns(w, h)
    trace = [snmf_objective(x, w, h, cfg.mu)]
    for it in range(cfg.max_iters):
        h = update_h(x, w, h, cfg.mu)
        w = update_w(x, w, h)
        obj = snmf_objective(x, w, h, cfg.mu)
        if not np.isfinite(obj):
            raise NumericError(f"objective diverged at iteration {it}")
        trace.append(obj)
        prev = trace[-2]
        if prev > 0 and abs(prev - obj) / prev < cfg.rel_tol:
            break

    w, h = normalize_columns(w, h)
    # a component that decayed to exactly zero carries no information; reset
    # it to a flat unit-norm column so downstream consumers see a valid codebook
    dead = ~np.any(w > 0, axis=0)
    if np.any(dead):
        w = w.copy()
        h = h.copy()
        w[:, dead] = 1.0 / np.sqrt(f)
        h[dead, :] = 0.0

    return (
        Dictionary(values=w, mu=cfg.mu, seed=cfg.seed, objective_trace=trace),
        Activations(values=h),
    )


def infer_activations(x: np.ndarray, dictionary: Dictionary, mu: float = 0.0,
                      max_iters: int = 200, rel_tol: float = 1e-6, seed: int = 0) -> Activations:
    """Infer H against a frozen dictionary by iterating the H update alone."""
    w = dictionary.values
    if x.shape[0] != w.shape[0]:
        raise DimensionError(f"spectrogram has {x.shape[0]} bins, dictionary {w.shape[0]}")
    rng = np.random.default_rng(seed)
    h = 1.0 - rng.random((w.shape[1], x.shape[1]))
    prev = snmf_objective(x, w, h, mu)
    for _ in range(max_iters):
        h = update_h(x, w, h, mu)
        obj = snmf_objective(x, w, h, mu)
        if prev > 0 and abs(prev - obj) / prev < rel_tol:
            break
        prev = obj
    return Activations(values=h)


def dictionary_to_bytes(dictionary: Dictionary) -> bytes:
    """Serialize to the NSD1 layout."""
    f, k = dictionary.values.shape
    parts = [
        DICTIONARY_MAGIC,
        struct.pack("<II", f, k),
        np.asarray(dictionary.values, dtype="<f4").T.tobytes(),  # column-major
        struct.pack("<dq", dictionary.mu, dictionary.seed),
    ]
    return b"".join(parts)


def dictionary_from_bytes(blob: bytes, name: str = "<bytes>") -> Dictionary:
    if len(blob) < 12 + 16:
        raise FormatError(f"{name}: truncated header ({len(blob)} bytes)")
    if blob[:4] != DICTIONARY_MAGIC:
        raise FormatError(f"{name}: bad magic {blob[:4]!r}")
    f, k = struct.unpack("<II", blob[4:12])
    count = f * k
    expected = 12 + 4 * count + 16
    if len(blob) != expected:
        raise FormatError(f"{name}: expected {expected} bytes, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", count=count, offset=12).reshape(k, f).T
    mu, seed = struct.unpack("<dq", blob[-16:])
    return Dictionary(values=values.astype(np.float64), mu=mu, seed=seed)


def save_dictionary(dictionary: Dictionary, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dictionary_to_bytes(dictionary))


def load_dictionary(path) -> Dictionary:
    with open(path, "rb") as fh:
        blob = fh.read()
    return dictionary_from_bytes(blob, name=str(path))
