"""Frame-level label files.

A label file is text: a header line ``FRAMES <hop-seconds> <C>`` followed by
one line per frame holding C space-separated symbols from {0, 1, -}.  The
"-" symbol marks a class as unannotated for that frame; when a frame range
is turned into a LabelMatrix, any "-" inside the range masks the whole class
out for that sample, which removes it from the classification loss.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .network import LabelMatrix

UNANNOTATED = -1


def write_label_file(path, frames: np.ndarray, hop: float) -> None:
    """Write a (C, T) symbol matrix with entries in {0, 1, -1(=unannotated)}."""
    frames = np.asarray(frames)
    c, t = frames.shape
    lines = [f"FRAMES {hop:.6f} {c}"]
    sym = {0: "0", 1: "1", UNANNOTATED: "-"}
    for i in range(t):
        lines.append(" ".join(sym[int(v)] for v in frames[:, i]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_label_file(path) -> tuple[np.ndarray, float]:
    """Read back a (C, T) symbol matrix (entries 0/1/-1) and the hop."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("FRAMES "):
        raise FormatError(f"{path}: missing FRAMES header")
    parts = lines[0].split()
    if len(parts) != 3:
        raise FormatError(f"{path}: malformed header {lines[0]!r}")
    hop = float(parts[1])
    c = int(parts[2])
    body = [ln for ln in lines[1:] if ln]
    frames = np.empty((c, len(body)), dtype=np.int8)
    lookup = {"0": 0, "1": 1, "-": UNANNOTATED}
    for t, ln in enumerate(body):
        syms = ln.split()
        if len(syms) != c:
            raise FormatError(f"{path}: line {t + 2} has {len(syms)} symbols, expected {c}")
        try:
            frames[:, t] = [lookup[s] for s in syms]
        except KeyError as exc:
            raise FormatError(f"{path}: line {t + 2} has invalid symbol {exc.args[0]!r}") from exc
    return frames, hop


def label_matrix_from_range(frames: np.ndarray, start: int, end: int) -> LabelMatrix:
    """Build a LabelMatrix for frames [start, end); "-" anywhere masks the class."""
    window = frames[:, start:end]
    mask = ~np.any(window == UNANNOTATED, axis=1)
    values = np.where(window == 1, 1.0, 0.0)
    return LabelMatrix(values=values, mask=mask)
