"""Inter-cluster distance semantics and the condensed pairwise distance store.

Three linkage rules are supported. ``AVERAGE`` is the instance-based mean
of all cross-cluster pair distances and is the default; ``SINGLE`` and
``COMPLETE`` exist for the chaining comparison only.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numba as nb
import numpy as np

from .codebook import Codebook
from .errors import ResourceError, ValidationError


class LinkageKind(enum.IntEnum):
    AVERAGE = 0
    SINGLE = 1
    COMPLETE = 2

    @classmethod
    def parse(cls, value: "LinkageKind | str | int") -> "LinkageKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValidationError(f"unknown linkage {value!r}; expected average, single or complete") from None
        return cls(value)

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class ClusterView:
    members: tuple[int, ...]

    def __init__(self, members: Iterable[int]):
        ms = tuple(sorted(int(m) for m in members))
        if not ms:
            raise ValidationError("cluster must have at least one member")
        if len(set(ms)) != len(ms):
            raise ValidationError("cluster members must be distinct")
        object.__setattr__(self, "members", ms)

    @property
    def size(self) -> int:
        return len(self.members)


def _check_pair(a: ClusterView, b: ClusterView, n: int) -> None:
    if set(a.members) & set(b.members):
        raise ValidationError("clusters overlap")
    for m in (a.members[0], a.members[-1], b.members[0], b.members[-1]):
        if not 0 <= m < n:
            raise ValidationError(f"member index {m} out of range for codebook of {n} rows")


def cluster_distance(a: ClusterView, b: ClusterView, cb: Codebook, kind=LinkageKind.AVERAGE) -> float:
    kind = LinkageKind.parse(kind)
    _check_pair(a, b, cb.n)
    # summation order is fixed by (lower-first-member cluster, member index) so that
    # swapping the arguments gives a bit-identical result
    if b.members < a.members:
        a, b = b, a
    xa = cb.data[list(a.members)]
    xb = cb.data[list(b.members)]
    pair = np.sqrt(((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=2))
    if kind is LinkageKind.SINGLE:
        return float(pair.min())
    if kind is LinkageKind.COMPLETE:
        return float(pair.max())
    total = 0.0
    for v in pair.ravel():
        total += float(v)
    return total / (a.size * b.size)


def lw_update(d_su: float, d_tu: float, size_s: int, size_t: int) -> float:
    """Distance from the union of clusters s and t to a third cluster u (average linkage)."""
    if d_su < 0 or d_tu < 0:
        raise ValidationError("distances must be non-negative")
    if size_s < 1 or size_t < 1:
        raise ValidationError("cluster sizes must be positive")
    return _lw_average(float(d_su), float(d_tu), float(size_s), float(size_t))


@nb.njit(cache=True, nogil=True, inline="always")
def _lw_average(d_su, d_tu, size_s, size_t):
    return (size_s * d_su + size_t * d_tu) / (size_s + size_t)


@nb.njit(cache=True, nogil=True, inline="always")
def condensed_index(n, i, j):
    """Position of pair (i, j), i < j, in the row-major condensed upper triangle."""
    return n * i - (i * (i + 1)) // 2 + (j - i - 1)


@nb.njit(cache=True, nogil=True)
def _pdist_rows(x, out, r0, r1):
    n, d = x.shape
    for i in range(r0, r1):
        base = condensed_index(n, i, i + 1)
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            out[base + (j - i - 1)] = math.sqrt(acc)


def _row_blocks(n: int, parts: int) -> list[tuple[int, int]]:
    """Split rows 0..n-1 into contiguous blocks with roughly equal pair counts."""
    total = n * (n - 1) // 2
    bounds = [0]
    acc = 0
    target = total / parts
    for i in range(n - 1):
        acc += n - i - 1
        if acc >= target * len(bounds) and len(bounds) < parts:
            bounds.append(i + 1)
    bounds.append(n)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def condensed_size(n: int) -> int:
    return n * (n - 1) // 2


def pairwise_matrix(cb: Codebook, threads: int = 1) -> np.ndarray:
    """All N(N-1)/2 Euclidean distances in float64, row-major over i < j.

    Each entry is computed by the same fixed-order loop whichever worker owns
    its row, so the result does not depend on ``threads``.
    """
    n = cb.n
    m = condensed_size(n)
    try:
        out = np.empty(m, dtype=np.float64)
    except MemoryError:
        raise ResourceError(
            f"cannot allocate condensed distance store: {m} entries = {8 * m / 2**30:.2f} GiB"
        ) from None
    x = np.ascontiguousarray(cb.data)
    threads = max(1, int(threads))
    if threads == 1 or n < 64:
        _pdist_rows(x, out, 0, n)
    else:
        blocks = _row_blocks(n, threads * 4)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda blk: _pdist_rows(x, out, blk[0], blk[1]), blocks))
    return out


def square_from_condensed(dist: np.ndarray, n: int) -> np.ndarray:
    sq = np.zeros((n, n), dtype=np.float64)
    iu = np.triu_indices(n, 1)
    sq[iu] = dist
    sq[(iu[1], iu[0])] = dist
    return sq


def condensed_entry(dist: np.ndarray, n: int, i: int, j: int) -> float:
    if i == j:
        return 0.0
    if i > j:
        i, j = j, i
    return float(dist[condensed_index(n, i, j)])
