"""Alignment tensors: export, marginals, slices and grayscale heatmaps.

A fine-grained model yields alpha[t', t, d] for target step t', source
position t and annotation dimension d.  Averaging over d gives a
source/target alignment matrix; averaging over t' gives a per-source-word
profile of which dimensions are used.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .attention import AlignmentTensor, Variant
from .errors import DataError

log = logging.getLogger(__name__)

FGAT_MAGIC = b"FGAT"
FGAT_VERSION = 1


@dataclass
class AlignmentRecord:
    source: list[str]
    target: list[str]
    alpha: np.ndarray
    variant: Variant = Variant.ATTY2D
    fingerprint: str = ""

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim not in (2, 3):
            raise DataError(f"alignment must be 2-D or 3-D, got shape {self.alpha.shape}")
        if self.alpha.shape[:2] != (len(self.target), len(self.source)):
            raise DataError(
                f"alignment shape {self.alpha.shape} does not match "
                f"{len(self.target)} target and {len(self.source)} source tokens"
            )

    @classmethod
    def from_tensor(cls, source, target, tensor: AlignmentTensor, fingerprint: str = "") -> "AlignmentRecord":
        return cls(list(source), list(target), tensor.alpha, tensor.variant, fingerprint)

    @property
    def fine_grained(self) -> bool:
        return self.alpha.ndim == 3

    @property
    def D(self) -> int:
        return self.alpha.shape[2] if self.fine_grained else 1

    def as_3d(self) -> np.ndarray:
        return self.alpha if self.fine_grained else self.alpha[:, :, None]


def slice_dim(rec: AlignmentRecord, d: int) -> np.ndarray:
    """The (T', T) weights of dimension ``d``."""
    if not 0 <= d < rec.D:
        raise IndexError(f"dimension {d} out of range for D={rec.D}")
    return rec.as_3d()[:, :, d]


def avg_over_dims(rec: AlignmentRecord) -> np.ndarray:
    """(T', T) alignment strength, the mean of all dimension slices.

    Slices are accumulated in index order, so averaging the output of
    :func:`slice_dim` the same way reproduces this bit for bit.
    """
    if not rec.fine_grained:
        log.info("avg_over_dims: temporal record, returning its alignment unchanged")
        return rec.alpha.copy()
    acc = slice_dim(rec, 0).copy()
    for d in range(1, rec.D):
        acc += slice_dim(rec, d)
    return acc / rec.D


def avg_over_target(rec: AlignmentRecord) -> np.ndarray:
    """(T, D) matrix: each source position's weight per dimension, averaged over target steps."""
    if not rec.fine_grained:
        log.info("avg_over_target: temporal record, returning a single-column profile")
    a = rec.as_3d()
    acc = a[0].copy()
    for tp in range(1, a.shape[0]):
        acc += a[tp]
    return acc / a.shape[0]


def top_dims(rec: AlignmentRecord, t: int, k: int) -> list[tuple[int, float]]:
    """The ``k`` dimensions with most averaged weight at source position ``t``."""
    T = len(rec.source)
    if not 0 <= t < T:
        raise IndexError(f"source position {t} out of range for T={T}")
    if not 1 <= k <= rec.D:
        raise IndexError(f"k={k} outside 1..{rec.D}")
    row = avg_over_target(rec)[t]
    order = sorted(range(rec.D), key=lambda d: (-row[d], d))
    return [(d, float(row[d])) for d in order[:k]]


# -- heatmaps -------------------------------------------------------------


def to_pixels(matrix: np.ndarray) -> np.ndarray:
    """Linear map min -> 0, max -> 255; a constant matrix maps to 128."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise DataError("heatmap needs a finite 2-D matrix")
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.full(m.shape, 128, dtype=np.uint8)
    return np.rint((m - lo) / (hi - lo) * 255.0).astype(np.uint8)


def heatmap(
    matrix: np.ndarray,
    path,
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
) -> Path:
    """Write a binary PGM (P5), one pixel per cell, plus an axes sidecar.

    The sidecar ``<path>.axes`` holds a ``rows`` and a ``cols`` line of
    tab-separated labels (indices when no labels are given).
    """
    pix = to_pixels(matrix)
    h, w = pix.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())
    rows = row_labels if row_labels is not None else [str(i) for i in range(h)]
    cols = col_labels if col_labels is not None else [str(i) for i in range(w)]
    if len(rows) != h or len(cols) != w:
        raise DataError(f"{len(rows)}x{len(cols)} labels for a {h}x{w} heatmap")
    sidecar = path.with_name(path.name + ".axes")
    sidecar.write_text("rows\t" + "\t".join(rows) + "\ncols\t" + "\t".join(cols) + "\n", encoding="utf-8")
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise DataError(f"{path} is not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# -- FGAT tensor files ----------------------------------------------------


def fgat_bytes(rec: AlignmentRecord) -> bytes:
    a = rec.as_3d()
    head = FGAT_MAGIC + struct.pack("<4I", FGAT_VERSION, *a.shape)
    return head + np.ascontiguousarray(a, dtype="<f4").tobytes()


def sidecar_text(rec: AlignmentRecord) -> str:
    return (
        f"variant\t{rec.variant.value}\n"
        f"fingerprint\t{rec.fingerprint}\n"
        f"source\t{' '.join(rec.source)}\n"
        f"target\t{' '.join(rec.target)}\n"
    )


def save_fgat(rec: AlignmentRecord, path) -> Path:
    """Write ``path`` (binary tensor) and ``path.tok`` (tokens and metadata)."""
    path = Path(path)
    path.write_bytes(fgat_bytes(rec))
    path.with_name(path.name + ".tok").write_text(sidecar_text(rec), encoding="utf-8")
    return path


def load_fgat(path) -> AlignmentRecord:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != FGAT_MAGIC:
        raise DataError(f"{path} is not an FGAT file")
    version, tp, t, d = struct.unpack_from("<4I", raw, 4)
    if version != FGAT_VERSION:
        raise DataError(f"unsupported FGAT version {version}")
    n = tp * t * d
    if len(raw) != 20 + 4 * n:
        raise DataError(f"{path}: expected {n} floats, file has {(len(raw) - 20) // 4}")
    alpha = np.frombuffer(raw, dtype="<f4", offset=20).astype(np.float64).reshape(tp, t, d)
    meta = {}
    side = path.with_name(path.name + ".tok")
    if side.exists():
        for line in side.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition("\t")
            meta[key] = value
    variant = Variant.parse(meta.get("variant", "atty2d"))
    source = meta["source"].split() if "source" in meta else [str(i) for i in range(t)]
    target = meta["target"].split() if "target" in meta else [str(i) for i in range(tp)]
    if not variant.fine_grained:
        alpha = alpha[:, :, 0]
    return AlignmentRecord(source, target, alpha, variant, meta.get("fingerprint", ""))
