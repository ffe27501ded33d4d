"""Codebook data model, CBK1 file I/O, nearest-token quantization and fixtures."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, GenerationError, ValidationError

CBK_MAGIC = b"CBK1"
CBK_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


@dataclass(frozen=True, eq=False)
class Codebook:
    """N embedding rows of dimension d.

    Values are held as float64 but are always exactly representable in
    float32, which is the on-disk precision; this keeps save/load lossless.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValidationError(f"codebook must be 2-D, got shape {arr.shape}")
        n, d = arr.shape
        if n < 2:
            raise ValidationError(f"codebook needs at least 2 rows, got {n}")
        if d < 1:
            raise ValidationError(f"codebook dimension must be >= 1, got {d}")
        with np.errstate(over="ignore", invalid="ignore"):
            arr = arr.astype(np.float32).astype(np.float64)
        bad = ~np.isfinite(arr).all(axis=1)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"non-finite value in codebook row {row}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()

    def __hash__(self) -> int:
        return hash((self.data.shape, self.data.tobytes()))

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(CBK_MAGIC, CBK_VERSION, self.n, self.d)
        return header + self.data.astype("<f4").tobytes(order="C")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Codebook":
        if len(raw) < _HEADER.size:
            raise FormatError(f"CBK1 header truncated ({len(raw)} bytes)")
        magic, version, n, d = _HEADER.unpack_from(raw)
        if magic != CBK_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {CBK_MAGIC!r}")
        if version != CBK_VERSION:
            raise FormatError(f"unsupported CBK1 version {version}")
        if n < 2 or d < 1:
            raise ValidationError(f"invalid codebook shape N={n}, d={d}")
        expected = _HEADER.size + 4 * n * d
        if len(raw) != expected:
            raise FormatError(f"CBK1 payload size mismatch: expected {expected} bytes, got {len(raw)}")
        values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d)
        return cls(values)


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise type(exc)(exc.errno, f"cannot read codebook: {exc.strerror}", str(path)) from exc
    return Codebook.from_bytes(raw)


def save_codebook(cb: Codebook, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_bytes(cb.to_bytes())
    except OSError as exc:
        raise type(exc)(exc.errno, f"cannot write codebook: {exc.strerror}", str(path)) from exc


def _as_query(z, d: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1:] != (d,):
        raise ValidationError(f"feature vector has shape {z.shape}, codebook dimension is {d}")
    if not np.isfinite(z).all():
        raise ValidationError("feature vector contains non-finite values")
    return z


def quantize(z, cb: Codebook) -> int:
    """Index of the codebook row nearest to ``z``; ties go to the smallest index."""
    z = _as_query(z, cb.d)
    if z.ndim != 1:
        raise ValidationError("quantize expects a single vector; use quantize_batch")
    sq = ((cb.data - z) ** 2).sum(axis=1)
    return int(np.argmin(sq))


def quantize_batch(z, cb: Codebook) -> np.ndarray:
    z = np.atleast_2d(_as_query(z, cb.d))
    out = np.empty(z.shape[0], dtype=np.int64)
    for i, row in enumerate(z):
        out[i] = np.argmin(((cb.data - row) ** 2).sum(axis=1))
    return out


def synth_blobs(
    num_blobs: int,
    points_per_blob: Sequence[int],
    d: int,
    separation: float,
    sigma: float,
    seed: int,
    max_retries: int = 200,
) -> tuple[Codebook, np.ndarray]:
    """Isotropic Gaussian blobs with centres at least ``separation * sigma`` apart."""
    if num_blobs < 1:
        raise ValidationError("num_blobs must be positive")
    sizes = [int(p) for p in points_per_blob]
    if len(sizes) != num_blobs:
        raise ValidationError(f"points_per_blob has {len(sizes)} entries, expected {num_blobs}")
    if any(p < 1 for p in sizes):
        raise ValidationError("every blob needs at least one point")
    if d < 1:
        raise ValidationError("d must be positive")
    if not separation > 0 or not sigma > 0:
        raise ValidationError("separation and sigma must be positive")
    if sum(sizes) < 2:
        raise ValidationError("fixture needs at least 2 points in total")

    rng = np.random.default_rng(seed)
    min_gap = separation * sigma
    side = 2.0 * min_gap * max(1.0, num_blobs ** (1.0 / d))
    centers: list[np.ndarray] = []
    for _ in range(max_retries * num_blobs):
        if len(centers) == num_blobs:
            break
        c = rng.uniform(0.0, side, size=d)
        if all(np.linalg.norm(c - o) >= min_gap for o in centers):
            centers.append(c)
    if len(centers) < num_blobs:
        raise GenerationError(
            f"placed only {len(centers)} of {num_blobs} centres at separation {min_gap:g}"
        )
    points = [c + sigma * rng.standard_normal((p, d)) for c, p in zip(centers, sizes)]
    labels = np.repeat(np.arange(num_blobs), sizes)
    return Codebook(np.vstack(points)), labels


# Bridge fixture: two dense Gaussian blobs joined by a sparse chain of points
# whose spacing is below the gaps around the blobs' own tail points, so single
# linkage chains the blobs together while average linkage keeps them apart.
BRIDGE_BLOB_SIZE = 250
BRIDGE_SIGMA = 1.0
BRIDGE_CENTER_GAP = 9.0
BRIDGE_POINTS = 10
BRIDGE_JITTER = 0.05


def synth_bridge(seed: int) -> tuple[Codebook, np.ndarray]:
    """Two blobs plus a bridge; labels are the 2-way truth (bridge points go to the nearer blob)."""
    rng = np.random.default_rng(seed)
    left = BRIDGE_SIGMA * rng.standard_normal((BRIDGE_BLOB_SIZE, 2))
    right = BRIDGE_SIGMA * rng.standard_normal((BRIDGE_BLOB_SIZE, 2)) + [BRIDGE_CENTER_GAP, 0.0]
    lo, hi = 2.0 * BRIDGE_SIGMA, BRIDGE_CENTER_GAP - 2.0 * BRIDGE_SIGMA
    xs = np.linspace(lo, hi, BRIDGE_POINTS)
    bridge = np.column_stack([xs, np.zeros_like(xs)]) + BRIDGE_JITTER * rng.standard_normal((xs.size, 2))
    bridge_labels = (bridge[:, 0] > BRIDGE_CENTER_GAP / 2).astype(np.int64)

    data = np.vstack([left, right, bridge])
    labels = np.concatenate(
        [np.zeros(BRIDGE_BLOB_SIZE, np.int64), np.ones(BRIDGE_BLOB_SIZE, np.int64), bridge_labels]
    )
    return Codebook(data), labels
