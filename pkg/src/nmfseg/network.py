"""Frame-level segmentation network with handwritten reverse-mode gradients.

Architecture: a 1x1 bottleneck projects D input features to a fixed channel
width, followed by 3 blocks of 5 dilated 1-D convolutions (kernel 3,
dilations 1,2,4,8,16, ReLU after each layer).  Each block adds a residual
connection from its input to its conv-path output; the block outputs are
summed into a skip path that feeds a final 1x1 convolution whose ReLU output
is the non-negative activation matrix H.  Class logits are theta @ H with no
bias.  All convolutions zero-pad symmetrically so the frame count never
changes.

Checkpoints use the "NSM1" layout: magic; u32 header fields D, K, C,
channels, kernel, block count, dilation count, then the dilation list; a u64
byte length followed by an embedded "NSD1" dictionary blob (length 0 when no
dictionary is attached); then every parameter as little-endian f32 in the
order reported by ``SegModel.parameters()``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, NumericError
from .frontend import FeatureSequence
from .nmf import Activations, Dictionary, dictionary_from_bytes, dictionary_to_bytes

MODEL_MAGIC = b"NSM1"

DEFAULT_CHANNELS = 64
DEFAULT_DILATIONS = (1, 2, 4, 8, 16)
DEFAULT_BLOCKS = 3
KERNEL = 3

# Fixed affine input standardization.  Log-compressed features with a 1e-10
# floor live in roughly [-23, 4]; mapping through (s - CENTER) / SCALE keeps
# initial activations O(1) regardless of recording gain.  The constants are
# part of the architecture, not trained state.
INPUT_CENTER = -11.5
INPUT_SCALE = 11.5


@dataclass
class LabelMatrix:
    """Binary frame labels (C x T) with a per-class annotation mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise DimensionError(f"labels must be 2-D, got shape {self.values.shape}")
        if self.mask.shape != (self.values.shape[0],):
            raise DimensionError(f"mask shape {self.mask.shape} does not match {self.values.shape[0]} classes")
        if not np.all((self.values == 0) | (self.values == 1)):
            raise ValueError("labels must be binary")

    @property
    def classes(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class SegModel:
    """Encoder + linear head parameters, plus an optional frozen dictionary."""

    d: int
    k: int
    c: int
    channels: int
    dilations: tuple
    n_blocks: int
    kernel: int
    bneck_w: np.ndarray
    bneck_b: np.ndarray
    conv_w: list  # [block][layer] -> (channels, channels, kernel)
    conv_b: list
    out_w: np.ndarray
    out_b: np.ndarray
    theta: np.ndarray
    w_ref: Dictionary | None = None

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in checkpoint order (w_ref excluded)."""
        out = [("bneck_w", self.bneck_w), ("bneck_b", self.bneck_b)]
        for b in range(self.n_blocks):
            for l in range(len(self.dilations)):
                out.append((f"block{b}.conv{l}.w", self.conv_w[b][l]))
                out.append((f"block{b}.conv{l}.b", self.conv_b[b][l]))
        out.append(("out_w", self.out_w))
        out.append(("out_b", self.out_b))
        out.append(("theta", self.theta))
        return out

    def parameter_count(self) -> int:
        return sum(a.size for _, a in self.parameters())

    def load_parameters(self, params: dict, dtype=np.float64) -> None:
        for name, arr in self.parameters():
            new = np.asarray(params[name])
            if new.shape != arr.shape:
                raise DimensionError(f"{name}: shape {new.shape} != {arr.shape}")
        self.bneck_w = np.array(params["bneck_w"], dtype=dtype)
        self.bneck_b = np.array(params["bneck_b"], dtype=dtype)
        for b in range(self.n_blocks):
            for l in range(len(self.dilations)):
                self.conv_w[b][l] = np.array(params[f"block{b}.conv{l}.w"], dtype=dtype)
                self.conv_b[b][l] = np.array(params[f"block{b}.conv{l}.b"], dtype=dtype)
        self.out_w = np.array(params["out_w"], dtype=dtype)
        self.out_b = np.array(params["out_b"], dtype=dtype)
        self.theta = np.array(params["theta"], dtype=dtype)

    def attach_dictionary(self, dictionary: Dictionary) -> None:
        if dictionary.components != self.k:
            raise DimensionError(f"dictionary has {dictionary.components} components, model expects {self.k}")
        self.w_ref = dictionary


def init_model(d: int, k: int, c: int, seed: int, channels: int = DEFAULT_CHANNELS,
               n_blocks: int = DEFAULT_BLOCKS, dilations: tuple = DEFAULT_DILATIONS) -> SegModel:
    """Seeded uniform init with bound sqrt(1/fan_in); biases start at zero."""
    if min(d, k, c) < 1:
        raise ValueError(f"dimensions must be >= 1, got D={d}, K={k}, C={c}")
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    bneck_w = uniform((channels, d), d)
    bneck_b = np.zeros(channels)
    conv_w, conv_b = [], []
    for _ in range(n_blocks):
        ws, bs = [], []
        for _ in dilations:
            ws.append(uniform((channels, channels, KERNEL), channels * KERNEL))
            bs.append(np.zeros(channels))
        conv_w.append(ws)
        conv_b.append(bs)
    out_w = uniform((k, channels), channels)
    out_b = np.zeros(k)
    theta = uniform((c, k), k)
    return SegModel(d=d, k=k, c=c, channels=channels, dilations=tuple(dilations),
                    n_blocks=n_blocks, kernel=KERNEL, bneck_w=bneck_w, bneck_b=bneck_b,
                    conv_w=conv_w, conv_b=conv_b, out_w=out_w, out_b=out_b, theta=theta)


class _Layout:
    """Guarded flat layout for a batch.

    A (B, C, T) batch is stored as one (C, B*(T + 2P)) matrix where P is the
    maximum dilation.  Each sample occupies a slot of width S = T + 2P whose
    first and last P columns are structural zeros.  Dilated taps then become
    plain column shifts of the whole matrix (one GEMM per tap, no per-sample
    bookkeeping): a tap can only ever read its own sample's guard zeros, never
    a neighbor.  Guards are re-zeroed after every bias add so they stay exact
    zeros; ReLU gates then keep guard gradients at zero as well.
    """

    def __init__(self, batch: int, frames: int, pad: int):
        self.b = batch
        self.t = frames
        self.p = pad
        self.s = frames + 2 * pad
        self.n = batch * self.s

    def flat(self, channels: int, dtype) -> np.ndarray:
        return np.zeros((channels, self.n), dtype=dtype)

    def core(self, flat: np.ndarray) -> np.ndarray:
        """(C, B, T) view of the payload columns."""
        return flat.reshape(flat.shape[0], self.b, self.s)[:, :, self.p:self.p + self.t]

    def from_batch(self, x: np.ndarray) -> np.ndarray:
        flat = self.flat(x.shape[1], x.dtype)
        self.core(flat)[...] = x.transpose(1, 0, 2)
        return flat

    def to_batch(self, flat: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(self.core(flat).transpose(1, 0, 2))

    def zero_guards(self, flat: np.ndarray) -> None:
        view = flat.reshape(flat.shape[0], self.b, self.s)
        view[:, :, :self.p] = 0
        view[:, :, self.s - self.p:] = 0


def _taps(w: np.ndarray) -> tuple:
    """Contiguous per-tap weight matrices (a strided slice would miss BLAS)."""
    return tuple(np.ascontiguousarray(w[:, :, j]) for j in range(3))


def _dconv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, d: int, lay: _Layout) -> np.ndarray:
    """Taps at -d, 0, +d over the guarded flat matrix."""
    w0, w1, w2 = _taps(w)
    y = w1 @ x
    y[:, d:] += w0 @ x[:, :-d]
    y[:, :-d] += w2 @ x[:, d:]
    y += b[:, None]
    lay.zero_guards(y)
    return y


def _dconv_grads(g_pre: np.ndarray, x: np.ndarray, w: np.ndarray, d: int, lay: _Layout):
    """Weight/bias/input gradients; ``g_pre`` must have zero guards."""
    w0, w1, w2 = _taps(w)
    g_w = np.empty_like(w)
    g_w[:, :, 1] = g_pre @ x.T
    g_w[:, :, 0] = g_pre[:, d:] @ x[:, :-d].T
    g_w[:, :, 2] = g_pre[:, :-d] @ x[:, d:].T
    g_x = w1.T @ g_pre
    g_x[:, :-d] += w0.T @ g_pre[:, d:]
    g_x[:, d:] += w2.T @ g_pre[:, :-d]
    lay.zero_guards(g_x)
    return g_w, g_pre.sum(axis=1), g_x


def _forward_cache(model: SegModel, s: np.ndarray) -> dict:
    """Run the encoder on a (B, D, T) batch, keeping every pre-activation."""
    if s.ndim != 3 or s.shape[1] != model.d:
        raise DimensionError(f"expected batch shape (B, {model.d}, T), got {s.shape}")
    lay = _Layout(s.shape[0], s.shape[2], max(model.dilations))
    s_flat = lay.from_batch((s - INPUT_CENTER) * np.asarray(1.0 / INPUT_SCALE, dtype=s.dtype))
    x = model.bneck_w @ s_flat
    x += model.bneck_b[:, None]
    lay.zero_guards(x)
    skip = np.zeros_like(x)
    layer_inputs, layer_pres = [], []
    for b in range(model.n_blocks):
        u = x
        v = u
        inputs_b, pres_b = [], []
        for l, dil in enumerate(model.dilations):
            pre = _dconv_forward(v, model.conv_w[b][l], model.conv_b[b][l], dil, lay)
            inputs_b.append(v)
            pres_b.append(pre)
            v = np.maximum(pre, 0.0)
        x = u + v
        skip = skip + x
        layer_inputs.append(inputs_b)
        layer_pres.append(pres_b)
    pre_out = model.out_w @ skip
    pre_out += model.out_b[:, None]
    lay.zero_guards(pre_out)
    h_flat = np.maximum(pre_out, 0.0)
    logits_flat = model.theta @ h_flat
    return {
        "layout": lay, "s_flat": s_flat, "skip": skip, "pre_out": pre_out,
        "h_flat": h_flat, "logits_flat": logits_flat,
        "layer_inputs": layer_inputs, "layer_pres": layer_pres,
        "h": lay.to_batch(h_flat), "logits": lay.to_batch(logits_flat),
    }


def _backward_from_cache(model: SegModel, cache: dict, g_logits_flat: np.ndarray,
                         g_h_extra_flat: np.ndarray | None = None) -> dict:
    """Propagate flat-layout loss gradients to every trainable parameter.

    Both gradient inputs must carry zero guard columns.
    """
    lay = cache["layout"]
    h_flat = cache["h_flat"]
    grads = {"theta": g_logits_flat @ h_flat.T}
    g_h = model.theta.T @ g_logits_flat
    if g_h_extra_flat is not None:
        g_h += g_h_extra_flat
    g_pre_out = g_h * (cache["pre_out"] > 0)
    grads["out_w"] = g_pre_out @ cache["skip"].T
    grads["out_b"] = g_pre_out.sum(axis=1)
    g_skip = model.out_w.T @ g_pre_out

    g_x = np.zeros_like(g_skip)  # gradient on the residual stream from blocks above
    for b in range(model.n_blocks - 1, -1, -1):
        g_xb = g_x + g_skip  # each block output feeds the skip sum
        g_v = g_xb
        for l in range(len(model.dilations) - 1, -1, -1):
            g_pre = g_v * (cache["layer_pres"][b][l] > 0)
            g_w, g_b, g_v = _dconv_grads(g_pre, cache["layer_inputs"][b][l],
                                         model.conv_w[b][l], model.dilations[l], lay)
            grads[f"block{b}.conv{l}.w"] = g_w
            grads[f"block{b}.conv{l}.b"] = g_b
        g_x = g_xb + g_v
    grads["bneck_w"] = g_x @ cache["s_flat"].T
    grads["bneck_b"] = g_x.sum(axis=1)
    return grads


def _as_feature_array(s) -> np.ndarray:
    values = s.values if isinstance(s, FeatureSequence) else np.asarray(s)
    return np.asarray(values, dtype=np.float64)


def forward(model: SegModel, s) -> tuple[Activations, np.ndarray]:
    """Encode one feature sequence into (H, logits)."""
    values = _as_feature_array(s)
    cache = _forward_cache(model, values[None])
    return Activations(values=cache["h"][0]), cache["logits"][0]


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_masked(logits: np.ndarray, labels: LabelMatrix) -> float:
    """Binary cross-entropy from logits, averaged over annotated (class, frame) cells.

    Computed as max(z, 0) - z*y + log(1 + exp(-|z|)), which never overflows.
    Returns 0 when every class is masked out.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != labels.values.shape:
        raise DimensionError(f"logits {logits.shape} vs labels {labels.values.shape}")
    n_cells = int(labels.mask.sum()) * labels.frames
    if n_cells == 0:
        return 0.0
    z = logits[labels.mask]
    y = labels.values[labels.mask]
    cell = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(cell.sum() / n_cells)


def _bce_grad(logits: np.ndarray, labels: LabelMatrix) -> np.ndarray:
    g = np.zeros_like(logits)
    n_cells = int(labels.mask.sum()) * labels.frames
    if n_cells == 0:
        return g
    g[labels.mask] = (sigmoid(logits[labels.mask]) - labels.values[labels.mask]) / n_cells
    return g


def total_loss(model: SegModel, s, x, labels: LabelMatrix, cfg) -> tuple[float, dict]:
    """Composite objective alpha*BCE + beta*||X - WH||^2 + gamma*||H||_1.

    Returns the weighted total and the raw (unweighted) components under keys
    "bce", "nmf", "l1".  The reconstruction term uses the frozen dictionary
    attached to the model and is skipped (reported 0) when beta == 0.
    """
    h, logits = forward(model, s)
    return _loss_given_forward(model, h.values, logits, x, labels, cfg)


def _loss_given_forward(model, h, logits, x, labels, cfg) -> tuple[float, dict]:
    comps = {"bce": bce_masked(logits, labels), "nmf": 0.0, "l1": float(h.sum())}
    if cfg.beta != 0.0:
        if model.w_ref is None:
            raise ValueError("reconstruction loss requires a dictionary attached to the model")
        xv = x.values if hasattr(x, "values") else np.asarray(x, dtype=np.float64)
        if xv.shape != (model.w_ref.freq_bins, h.shape[1]):
            raise DimensionError(f"spectrogram {xv.shape} incompatible with W {model.w_ref.values.shape} and T={h.shape[1]}")
        diff = model.w_ref.values @ h - xv
        comps["nmf"] = float(np.sum(diff * diff))
    total = cfg.alpha * comps["bce"] + cfg.beta * comps["nmf"] + cfg.gamma * comps["l1"]
    return total, comps


def backward(model: SegModel, s, x, labels: LabelMatrix, cfg) -> dict:
    """Exact gradients of total_loss for every trainable parameter."""
    values = _as_feature_array(s)
    cache = _forward_cache(model, values[None])
    lay = cache["layout"]
    h = cache["h"][0]
    logits = cache["logits"][0]

    g_logits_flat = lay.flat(model.c, logits.dtype)
    lay.core(g_logits_flat)[:, 0, :] = cfg.alpha * _bce_grad(logits, labels)
    g_h = np.zeros_like(h)
    if cfg.beta != 0.0:
        if model.w_ref is None:
            raise ValueError("reconstruction loss requires a dictionary attached to the model")
        xv = x.values if hasattr(x, "values") else np.asarray(x, dtype=np.float64)
        w = model.w_ref.values
        g_h += cfg.beta * 2.0 * (w.T @ (w @ h - xv))
    if cfg.gamma != 0.0:
        g_h += cfg.gamma  # d||H||_1/dH on the non-negative orthant
    g_h_flat = lay.flat(model.k, h.dtype)
    lay.core(g_h_flat)[:, 0, :] = g_h

    grads = _backward_from_cache(model, cache, g_logits_flat, g_h_flat)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return grads


def save_model(model: SegModel, path) -> None:
    """Write an NSM1 checkpoint, embedding the attached dictionary verbatim."""
    dict_blob = dictionary_to_bytes(model.w_ref) if model.w_ref is not None else b""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<7I", model.d, model.k, model.c, model.channels,
                             model.kernel, model.n_blocks, len(model.dilations)))
        fh.write(struct.pack(f"<{len(model.dilations)}I", *model.dilations))
        fh.write(struct.pack("<Q", len(dict_blob)))
        fh.write(dict_blob)
        for _, arr in model.parameters():
            fh.write(np.asarray(arr, dtype="<f4").tobytes())


def load_model(path) -> SegModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 4 + 28:
        raise FormatError(f"{path}: truncated header")
    d, k, c, channels, kernel, n_blocks, n_dils = struct.unpack("<7I", blob[4:32])
    off = 32
    dilations = struct.unpack(f"<{n_dils}I", blob[off:off + 4 * n_dils])
    off += 4 * n_dils
    (dict_len,) = struct.unpack("<Q", blob[off:off + 8])
    off += 8
    w_ref = None
    if dict_len:
        w_ref = dictionary_from_bytes(blob[off:off + dict_len], name=f"{path}[dict]")
        off += dict_len

    model = init_model(d, k, c, seed=0, channels=channels, n_blocks=n_blocks, dilations=dilations)
    if kernel != model.kernel:
        raise FormatError(f"{path}: unsupported kernel width {kernel}")
    params = {}
    for name, arr in model.parameters():
        count = arr.size
        end = off + 4 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated parameter payload at {name}")
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(arr.shape).astype(np.float64)
        off = end
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    model.load_parameters(params)
    if w_ref is not None:
        model.attach_dictionary(w_ref)
    return model
